from __future__ import annotations

import json
from dataclasses import replace
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utilex.currency import transfer
from utilex.errors import (
    BadProof,
    BadSignature,
    ContractNotActive,
    ContractNotTerminal,
    DeadlinePassed,
    DuplicateRating,
    IllegalTransition,
    InsufficientCredits,
    NotAParty,
    NotBuyer,
    WrongAuthority,
)
from utilex.ledger import (
    TERMINAL,
    TRANSITIONS,
    ContractState,
    Ledger,
    check_transition,
    fulfill_contract,
    load_blocks,
    revoke_contract,
    store_rating,
    verify_blocks,
    verify_chain,
    verify_export,
)
from utilex.metering import Direction, Meter, sign_reading
from utilex.transactions import Identity

D = Decimal


def error_of(res):
    assert len(res.rejected) == 1, res.rejected
    return res.rejected[0].error


class TestBlocks:
    def test_first_block_links_to_genesis(self, world):
        world.net.commit()
        blocks = world.net.ledger.blocks
        assert blocks[0].prev_hash == bytes(32)
        assert blocks[1].prev_hash == blocks[0].hash
        assert blocks[1].height == 1
        assert verify_chain(world.net.ledger)

    def test_registered_meter_in_state(self, world):
        a = world.party("a")
        reg = world.state.meters.meters["a/electricity/out"]
        assert reg.owner == a.account

    def test_wrong_authority_cannot_seal(self, world):
        h = len(world.net.ledger.blocks)
        wrong = next(x for x in world.net.authorities if x is not world.net.miner(h))
        with pytest.raises(WrongAuthority):
            world.net.ledger.append_block([], wrong, world.net.now)

    def test_outsider_cannot_seal(self, world):
        with pytest.raises(WrongAuthority):
            world.net.ledger.append_block([], Identity.from_seed("mallory"), 0)

    def test_bad_signature_tx_excluded(self, world):
        a, b = world.party("a", funds=100), world.party("b")
        good1 = transfer(a.identity, b.account, 10)
        forged = replace(transfer(a.identity, b.account, 50), signature=bytes(64))
        good2 = transfer(a.identity, b.account, 5)
        res = world.net.commit(good1, forged, good2)
        assert isinstance(error_of(res), BadSignature)
        assert res.block.txs == (good1, good2)
        assert world.state.wallet(b.account).free == D("15")

    def test_round_robin_schedule(self, world):
        for _ in range(6):
            world.net.commit()
        miners = [blk.miner for blk in world.net.ledger.blocks]
        auths = world.net.ledger.authorities
        assert all(m == auths[i % len(auths)] for i, m in enumerate(miners))


class TestContracts:
    def test_escrow_on_create(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, "1.5")
        w = world.state.wallet(buyer.account)
        assert c.state == ContractState.ACTIVE
        assert c.escrow == D("150") and w.free == D("50")

    def test_insufficient_credits_rejected(self, world):
        buyer, sup = world.party("buyer", funds=100), world.party("sup")
        res = world.net.commit(world.contract_tx(buyer, sup, 100, "1.5"))
        assert isinstance(error_of(res), InsufficientCredits)
        assert not world.state.contracts
        assert world.state.wallet(buyer.account).free == D("100")

    def test_two_contracts_can_use_whole_balance(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        world.open(buyer, sup, 50, 2)
        world.open(buyer, sup, 100, 1)
        w = world.state.wallet(buyer.account)
        assert w.free == 0 and w.escrow_total == D("200")
        res = world.net.commit(world.contract_tx(buyer, sup, 1, "0.001"))
        assert isinstance(error_of(res), InsufficientCredits)

    def test_supplier_signature_required(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        tx = world.contract_tx(buyer, sup, 10, 1)
        bad = replace(tx.payload, supplier_sig=bytes(64))
        tx2 = world.market.tx(tx.kind, bad)
        assert isinstance(error_of(world.net.commit(tx2)), BadSignature)


class TestFulfill:
    def test_full_delivery_pays_supplier(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, "1.5")
        res = world.net.commit(fulfill_contract(buyer.identity, c.contract_id, world.proof(c, 100)))
        assert not res.rejected
        assert c.state == ContractState.FULFILLED
        assert world.state.wallet(sup.account).free == D("150")
        assert world.state.wallet(buyer.account).free == D("50")

    def test_partial_delivery_refunds_rest(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, "1.5")
        world.net.commit(fulfill_contract(buyer.identity, c.contract_id, world.proof(c, 60, 59)))
        assert (c.payout, c.refund) == (D("88.5"), D("61.5"))

    def test_unregistered_meter_rejected(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, "1.5")
        good = world.proof(c, 100)
        rogue = Meter.from_seed("rogue", sup.account, "electricity", "x")
        s = sign_reading(rogue, Direction.PRODUCED, 100, world.net.now)
        forged = replace(good, supplier_reading=s)
        res = world.net.commit(fulfill_contract(buyer.identity, c.contract_id, forged))
        assert isinstance(error_of(res), BadProof)
        assert c.state == ContractState.ACTIVE

    def test_replayed_reading_rejected(self, world):
        buyer, sup = world.party("buyer", funds=400), world.party("sup")
        c1 = world.open(buyer, sup, 100, 1)
        c2 = world.open(buyer, sup, 100, 1)
        p = world.proof(c1, 100)
        world.net.commit(fulfill_contract(buyer.identity, c1.contract_id, p))
        replay = replace(p, contract_id=c2.contract_id)
        assert isinstance(error_of(world.net.commit(fulfill_contract(buyer.identity, c2.contract_id, replay))),
                          BadProof)

    def test_disputed_proof_cannot_fulfill(self, world):
        from utilex.errors import Disputed

        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, 1)
        with pytest.raises(Disputed) as info:
            world.proof(c, 100, 80)
        res = world.net.commit(fulfill_contract(buyer.identity, c.contract_id, info.value.proof))
        assert isinstance(error_of(res), BadProof)

    def test_outsider_cannot_fulfill(self, world):
        buyer, sup, other = world.party("buyer", funds=200), world.party("sup"), world.party("other")
        c = world.open(buyer, sup, 10, 1)
        res = world.net.commit(fulfill_contract(other.identity, c.contract_id, world.proof(c, 10)))
        assert isinstance(error_of(res), NotAParty)


class TestRevoke:
    def test_supplier_revoke_with_partial_proof(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, 2)
        res = world.net.commit(revoke_contract(sup.identity, c.contract_id, world.proof(c, 40)))
        assert not res.rejected
        assert c.state == ContractState.REVOKED
        assert (c.payout, c.refund) == (D("80"), D("120"))
        assert world.state.wallet(sup.account).free == D("80")
        assert world.state.wallet(buyer.account).free == D("120")
        assert world.state.query_ratings(sup.account).revocations == 1

    def test_buyer_revoke_without_delivery(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, 2)
        world.net.commit(revoke_contract(buyer.identity, c.contract_id))
        assert c.refund == D("200") and c.payout == 0
        assert world.state.wallet(buyer.account).free == D("200")
        assert world.state.query_ratings(buyer.account).revocations == 1

    def test_fulfilled_contract_cannot_be_revoked(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 100, 1)
        world.net.commit(fulfill_contract(buyer.identity, c.contract_id, world.proof(c, 100)))
        res = world.net.commit(revoke_contract(buyer.identity, c.contract_id))
        assert isinstance(error_of(res), ContractNotActive)
        assert c.state == ContractState.FULFILLED

    def test_revoke_after_deadline(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 10, 1, deadline=world.net.now + 2)
        res = world.net.commit(revoke_contract(buyer.identity, c.contract_id), now=world.net.now + 3)
        assert isinstance(error_of(res), DeadlinePassed)
        assert c.state == ContractState.EXPIRED and c.refund == D("10")


class TestExpiry:
    def test_expires_after_deadline_with_full_refund(self, world):
        buyer, sup = world.party("buyer", funds=50), world.party("sup")
        c = world.open(buyer, sup, 10, 2, deadline=world.net.now + 5)
        world.net.commit(now=world.net.now + 5)
        assert c.state == ContractState.ACTIVE
        res = world.net.commit(now=world.net.now + 1)
        assert [s.contract_id for s in res.expired] == [c.contract_id]
        assert c.state == ContractState.EXPIRED
        assert world.state.wallet(buyer.account).free == D("50")


class TestRatings:
    def test_store_then_duplicate_then_not_buyer(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 10, 1)
        world.net.commit(fulfill_contract(buyer.identity, c.contract_id, world.proof(c, 10)))
        assert not world.net.commit(store_rating(buyer.identity, c, 5)).rejected
        assert isinstance(error_of(world.net.commit(store_rating(buyer.identity, c, 4))), DuplicateRating)
        assert isinstance(error_of(world.net.commit(store_rating(sup.identity, c, 1))), NotBuyer)

    def test_active_contract_cannot_be_rated(self, world):
        buyer, sup = world.party("buyer", funds=200), world.party("sup")
        c = world.open(buyer, sup, 10, 1)
        assert isinstance(error_of(world.net.commit(store_rating(buyer.identity, c, 5))), ContractNotTerminal)

    def test_query_ratings(self, world):
        buyer, sup = world.party("buyer", funds=500), world.party("sup")
        c1, c2, c3 = (world.open(buyer, sup, 10, 1) for _ in range(3))
        for c in (c1, c2):
            world.net.commit(fulfill_contract(buyer.identity, c.contract_id, world.proof(c, 10)))
        world.net.commit(revoke_contract(sup.identity, c3.contract_id))
        world.net.commit(store_rating(buyer.identity, c1, 5), store_rating(buyer.identity, c2, 4))
        view = world.net.ledger.query_ratings(sup.account)
        assert sorted(view.scores, reverse=True) == [5, 4]
        assert view.revocations == 1


class TestTransitions:
    def test_table(self):
        S = ContractState
        assert TRANSITIONS[S.PROPOSED] == {S.ACTIVE}
        assert TRANSITIONS[S.ACTIVE] == {S.FULFILLED, S.REVOKED, S.EXPIRED}
        assert all(not TRANSITIONS[t] for t in TERMINAL)

    @pytest.mark.parametrize("src", list(ContractState))
    @pytest.mark.parametrize("dst", list(ContractState))
    def test_every_pair(self, src, dst):
        if dst in TRANSITIONS[src]:
            check_transition(src, dst)
        else:
            with pytest.raises(IllegalTransition):
                check_transition(src, dst)


def _build_chain(world, n_blocks=10):
    a, b = world.party("a", funds=1000), world.party("b", funds=1000)
    for _ in range(n_blocks):
        world.net.commit(transfer(a.identity, b.account, 1), transfer(b.identity, a.account, 2),
                         now=world.net.now + 1)
    return world.net.ledger


class TestChainIntegrity:
    def test_clean_chain_verifies(self, world):
        ledger = _build_chain(world, 12)
        assert verify_chain(ledger)
        assert verify_blocks(load_blocks(ledger.export_jsonl()))

    def test_flipped_byte_detected_at_block(self, world):
        ledger = _build_chain(world, 12)
        lines = ledger.export_jsonl().splitlines()
        doc = json.loads(lines[-4])
        sig = bytearray(bytes.fromhex(doc["txs"][0]["signature"]))
        sig[0] ^= 1
        doc["txs"][0]["signature"] = sig.hex()
        lines[-4] = json.dumps(doc)
        report = verify_blocks(load_blocks("\n".join(lines)))
        assert not report and report.height == len(lines) - 4

    def test_reordered_transactions_detected(self, world):
        ledger = _build_chain(world, 12)
        blocks = list(ledger.blocks)
        b = blocks[-3]
        assert len(b.txs) == 2
        blocks[-3] = replace(b, txs=tuple(reversed(b.txs)))
        report = verify_blocks(blocks)
        assert not report and report.height == b.height

    def test_dropped_block_detected(self, world):
        ledger = _build_chain(world, 12)
        blocks = ledger.blocks[:5] + ledger.blocks[6:]
        assert verify_blocks(blocks).height == 5

    def test_jsonl_round_trip_is_byte_stable(self, world):
        ledger = _build_chain(world, 12)
        text = ledger.export_jsonl()
        again = Ledger.from_jsonl(text)
        assert again.export_jsonl() == text
        assert again.state.digest() == ledger.state.digest()

    def test_hex_case_edit_detected(self, world):
        text = _build_chain(world, 3).export_jsonl()
        i = text.index('"signature":"') + len('"signature":"')
        while text[i] not in "abcdef":
            i += 1
        edited = text[:i] + text[i].upper() + text[i + 1:]
        assert verify_blocks(load_blocks(edited))  # same values once parsed
        report = verify_export(edited)
        assert not report and "canonical" in report.reason

    def test_truncated_jsonl_is_a_parse_error(self, world):
        text = _build_chain(world, 5).export_jsonl()
        with pytest.raises(ValueError):
            load_blocks(text[:-20])


@st.composite
def actions(draw):
    return draw(st.lists(st.tuples(st.sampled_from(["fulfill", "revoke_b", "revoke_s", "wait", "rate"]),
                                   st.integers(0, 2), st.integers(0, 120)), max_size=25))


class TestContractStateMachine:
    @settings(max_examples=40, deadline=None)
    @given(actions())
    def test_terminal_states_are_absorbing(self, acts):
        from conftest import World

        w = World()
        buyer, sup = w.party("buyer", funds=1000), w.party("sup")
        cs = [w.open(buyer, sup, 100, "1.5", deadline=w.net.now + 8) for _ in range(3)]
        seen: dict[str, ContractState] = {}
        for act, i, amount in acts:
            c = cs[i]
            before = c.state
            if act == "fulfill":
                try:
                    tx = fulfill_contract(buyer.identity, c.contract_id, w.proof(c, min(amount, 100)))
                except Exception:
                    continue
                w.net.commit(tx)
            elif act.startswith("revoke"):
                who = buyer if act == "revoke_b" else sup
                w.net.commit(revoke_contract(who.identity, c.contract_id))
            elif act == "rate":
                w.net.commit(store_rating(buyer.identity, c, 1 + amount % 5))
            else:
                w.net.commit(now=w.net.now + 1 + amount % 4)
            for cc in cs:
                if cc.contract_id in seen:
                    assert cc.state == seen[cc.contract_id]
                elif cc.state in TERMINAL:
                    seen[cc.contract_id] = cc.state
                    assert cc.payout + cc.refund == cc.escrow
            assert before == c.state or c.state in TRANSITIONS[before]
            assert w.state.book.conserved()
        assert verify_chain(w.net.ledger)
