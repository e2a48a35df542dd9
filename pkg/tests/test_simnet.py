from __future__ import annotations

import random
import time
from decimal import Decimal
from pathlib import Path

import pytest

from utilex.errors import NoSuchTarget, ScenarioInvalid
from utilex.ledger import ContractState, verify_chain
from utilex.node import UnmetReason
from utilex.simnet import FaultKind, Scenario, inject_fault, parse_fault, run
from utilex.simnet.generate import random_scenario
from utilex.simnet.protocol import CANONICAL_SEQUENCE, Envelope, respects_canonical_order

D = Decimal
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
FULL = list(range(1, 16))


def load(name):
    return Scenario.load(SCENARIOS / f"{name}.json")


def trade_doc(**over):
    doc = {
        "name": "pair", "seed": "pair", "end_tick": 15,
        "nodes": [
            {"name": "seller",
             "meters": [{"id": "seller/gen", "utility": "electricity", "direction": "Produced",
                         "driver": {"type": "pulses", "pulses": {"1": 20}}}],
             "offers": {"electricity": {"policy": "flat", "base_price": 1.0}}},
            {"name": "buyer", "demand": [{"tick": 3, "utility": "electricity", "quantity": 10}]},
        ],
        "mints": [{"tick": 0, "to": "buyer", "amount": 100}],
    }
    for i, patch in over.pop("node_patch", {}).items():
        doc["nodes"][i].update(patch)
    doc.update(over)
    return doc


def only_trade(result):
    assert len(result.trades) == 1
    return next(iter(result.trades.values()))


class TestProtocolTable:
    def test_fifteen_steps(self):
        assert [s.msg_no for s in CANONICAL_SEQUENCE] == FULL

    def test_envelope_rejects_bad_step(self):
        with pytest.raises(ValueError):
            Envelope(1, 16, "a", ("b",), None, 0, 0)
        with pytest.raises(ValueError):
            Envelope(1, 1, "a", ("b",), None, 5, 4)

    def test_order_check(self):
        assert respects_canonical_order([1, 2, "revoke", 14])
        assert not respects_canonical_order([1, 3, 2])


class TestHappyPath:
    def test_single_trade_runs_all_fifteen_steps(self):
        res = run(Scenario.from_dict(trade_doc()))
        tr = only_trade(res)
        assert res.steps(tr.trade_ref) == FULL
        assert tr.final_state == ContractState.FULFILLED
        assert res.ledger.state.wallet(res.nodes["seller"].account).free == D(10)
        assert verify_chain(res.ledger)

    def test_deterministic(self):
        sc = Scenario.from_dict(trade_doc())
        a, b = run(sc), run(sc)
        assert a.ledger_jsonl() == b.ledger_jsonl()
        assert a.trace_log() == b.trace_log()
        assert a.summary_text() == b.summary_text()

    def test_seed_changes_keys_not_outcome(self):
        sc = Scenario.from_dict(trade_doc())
        a, b = run(sc), run(sc, seed="other")
        assert a.ledger_jsonl() != b.ledger_jsonl()
        assert [r[1:] for r in a.balances()] == [r[1:] for r in b.balances()]

    def test_trace_lines_carry_tick_and_step(self):
        res = run(Scenario.from_dict(trade_doc()))
        lines = [ln for ln in res.trace_log().splitlines() if "msg=low-credit" not in ln]
        assert lines[0].startswith("tick=1 msg=1 seller/gen→seller ")
        assert lines[-1].split()[1] == "msg=15"


class TestEdgeScenarios:
    def test_empty_scenario(self):
        res = run(Scenario.from_dict({"name": "empty", "end_tick": 5, "nodes": [
            {"name": "a"}], "mints": [{"tick": 0, "to": "a", "amount": 10}]}))
        assert res.trace == [] or all(e.label == "low-credit" for e in res.trace)
        kinds = [tx.kind.value for b in res.ledger.blocks for tx in b.txs]
        assert kinds == ["Genesis", "Mint"]

    def test_self_supply_sends_no_protocol_messages(self):
        doc = trade_doc()
        doc["nodes"] = [{
            "name": "solo",
            "meters": [{"id": "solo/pv", "utility": "electricity", "direction": "Produced",
                        "driver": {"type": "pulses", "pulses": {"1": 20}}}],
            "demand": [{"tick": 3, "utility": "electricity", "quantity": 10}],
        }]
        doc["mints"] = [{"tick": 0, "to": "solo", "amount": 100}]
        res = run(Scenario.from_dict(doc))
        assert not [e for e in res.trace if e.msg_no not in (None, 1)]
        assert res.plans[0].self_supplied == D(10)

    def test_no_supplier_is_no_supply(self):
        doc = trade_doc()
        doc["nodes"] = [doc["nodes"][1]]
        res = run(Scenario.from_dict(doc))
        assert [(r, q) for _, r, q in res.unmet()] == [(UnmetReason.NO_SUPPLY, D(10))]

    def test_broke_buyer(self):
        res = run(Scenario.from_dict(trade_doc(mints=[{"tick": 0, "to": "buyer", "amount": 4}])))
        assert [(r, q) for _, r, q in res.unmet()] == [(UnmetReason.INSUFFICIENT_CREDITS, D(6))]
        assert only_trade(res).quantity == D(4)

    def test_declining_supplier(self):
        res = run(Scenario.from_dict(trade_doc(node_patch={0: {"acceptance_policy": "never"}})))
        tr = only_trade(res)
        assert tr.status == "declined"
        assert res.steps(tr.trade_ref)[-1] == "declined"
        assert res.market.offers  # reservation returned to the book

    def test_zero_delivery_is_revoked_by_supplier(self):
        res = run(Scenario.from_dict(trade_doc(node_patch={0: {"delivery_ratio": 0}})))
        tr = only_trade(res)
        assert res.steps(tr.trade_ref) == list(range(1, 11)) + ["revoke", 14, 15]
        c = res.ledger.state.contract(tr.contract_id)
        assert c.state == ContractState.REVOKED and c.refund == D(10)
        assert c.revoked_by == res.nodes["seller"].account

    def test_partial_delivery_pays_pro_rata(self):
        res = run(Scenario.from_dict(trade_doc(node_patch={0: {"delivery_ratio": 0.5}})))
        tr = only_trade(res)
        assert res.steps(tr.trade_ref) == FULL
        assert (tr.payout, tr.refund) == (D(5), D(5))

    def test_over_reading_buyer_disputes(self):
        res = run(Scenario.from_dict(trade_doc(node_patch={1: {"meter_bias": 1.3}})))
        tr = only_trade(res)
        steps = res.steps(tr.trade_ref)
        assert steps == list(range(1, 13)) + ["revoke", 14, 15]
        assert res.ledger.state.contract(tr.contract_id).state == ContractState.REVOKED
        assert tr.payout == D(10)


class TestFaults:
    def test_tampered_reading_is_rejected_and_refunded(self):
        res = run(inject_fault(load("scenario2"), FaultKind.TAMPER_READING, 13))
        tampered = [t for t in res.trades.values() if t.tampered]
        assert len(tampered) == 1
        tr = tampered[0]
        assert res.steps(tr.trade_ref) == list(range(1, 14)) + ["rejected", 14]
        c = res.ledger.state.contract(tr.contract_id)
        assert c.state == ContractState.EXPIRED and c.refund == c.escrow
        assert verify_chain(res.ledger)

    def test_offer_expiring_mid_negotiation(self):
        res = run(inject_fault(load("scenario2"), FaultKind.EXPIRE_MID_NEGOTIATION, 0))
        gone = [t for t in res.trades.values() if t.status == "offer-gone"]
        assert gone and res.steps(gone[0].trade_ref) == list(range(1, 7)) + ["offer-gone"]
        assert any(r == UnmetReason.NO_SUPPLY for _, r, _ in res.unmet())

    def test_dropped_offer(self):
        res = run(inject_fault(load("scenario2"), FaultKind.DROP_OFFER, 0))
        assert any("drop" in e.lower() for e in res.events)
        assert any(r == UnmetReason.NO_SUPPLY for _, r, _ in res.unmet())

    def test_fault_without_target(self):
        sc = Scenario.from_dict({"name": "x", "end_tick": 3, "nodes": [{"name": "a"}]})
        for kind in FaultKind:
            with pytest.raises(NoSuchTarget):
                inject_fault(sc, kind, 0)

    def test_fault_spec_parsing(self):
        f = parse_fault("tamper:13")
        assert (f.kind, f.at) == (FaultKind.TAMPER_READING, 13)
        assert parse_fault("drop").at == 0
        with pytest.raises(ValueError):
            parse_fault("explode:1")

    def test_unfired_fault_is_reported(self):
        doc = trade_doc(faults=[{"kind": "TamperReading", "at": 99}])
        res = run(Scenario.from_dict(doc))
        assert any("never fired" in e for e in res.events)


class TestValidation:
    @pytest.mark.parametrize("patch,where", [
        ({"nodes": [{"name": "a"}, {"name": "a"}]}, "nodes[1].name"),
        ({"nodes": [{"name": "market"}]}, "nodes[0].name"),
        ({"nodes": [{"name": "a", "meters": [{"id": "m", "utility": "gas", "direction": "Produced"}]}]},
         "nodes[0].meters[0].utility"),
        ({"nodes": [{"name": "a", "demand": [{"tick": 2, "utility": "water", "quantity": -1}]}]},
         "nodes[0].demand[0].quantity"),
        ({"nodes": [{"name": "a", "offers": {"water": {"policy": "auction", "base_price": 1}}}]},
         "nodes[0].offers.water.policy"),
        ({"nodes": [{"name": "a"}], "mints": [{"tick": 0, "to": "b", "amount": 1}]}, "mints[0].to"),
    ])
    def test_error_points_at_field(self, patch, where):
        doc = {"name": "bad", "end_tick": 5, **patch}
        with pytest.raises(ScenarioInvalid) as info:
            Scenario.from_dict(doc)
        assert info.value.location == where

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioInvalid):
            Scenario.load(tmp_path / "nope.json")


class TestBundledScenarios:
    def test_scenario1_ev_charging(self):
        res = run(load("scenario1"))
        buyer = [t for t in res.trades.values() if t.buyer == "carowner"]
        assert {t.utility for t in buyer} == {"electricity", "data"}
        assert all(res.steps(t.trade_ref) == FULL for t in buyer)
        bal = {n: f + e for n, f, e in res.balances()}
        assert bal["carowner"] == D(26) and bal["homeowner"] == D(4) and bal["state"] == D(20)
        assert [t for t, name, _ in res.notifications if name == "homeowner"]

    def test_scenario2_farmer_nets_twenty(self):
        res = run(load("scenario2"))
        assert res.trade_net("farmer") == D(20)
        assert all(t.final_state == ContractState.FULFILLED for t in res.trades.values())

    def test_scenario3_taxes_reach_state(self):
        res = run(load("scenario3"))
        bal = {n: f + e for n, f, e in res.balances()}
        assert bal["state"] == D(100)
        prices = [o.unit_price for o in res.market.submitted]
        assert prices == [D("1.75"), D("1.25")]
        for o in res.market.submitted:
            assert o.pricing.recompute() == o.unit_price

    @pytest.mark.parametrize("name", ["scenario1", "scenario2", "scenario3"])
    def test_fast_and_conserving(self, name):
        t0 = time.perf_counter()
        res = run(load(name))
        assert time.perf_counter() - t0 < 5
        assert res.ledger.state.book.conserved()
        assert verify_chain(res.ledger)


class TestRandomScenarios:
    def test_random_runs_conserve_and_order(self):
        rng = random.Random(7)
        for i in range(15):
            res = run(random_scenario(rng, name=f"r{i}"))
            assert res.ledger.state.book.conserved()
            assert verify_chain(res.ledger)
            for tr in res.trades.values():
                assert respects_canonical_order(res.steps(tr.trade_ref))
            assert not res.ledger.state.active_contracts()
