"""Deterministic discrete-event scenario runner.

One global integer clock.  Each tick runs, in order: meter polls, scheduled
mints and payments, demand events, delivery of every envelope due at or
before the tick (handlers may send more; zero-latency sends are delivered
within the same tick), sealing a block if there is anything to seal, and
low-credit checks.  Envelopes are delivered in ``(deliver_tick, seq)`` order.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Callable

from ..crypto import AccountId
from ..currency import Notification, mint, transfer
from ..encoding import fmt, to_jsonable
from ..errors import ContractNotActive, Disputed, MarketError, ScenarioInvalid, UtilexError
from ..ledger import (
    RATEABLE,
    ContractCreate,
    ContractState,
    Ledger,
    Settlement,
    SmartContract,
    verify_chain,
)
from ..market import Market, Offer
from ..metering import DRIVERS, UTILITIES, DeliveryProof, Direction, Meter, MeterReading
from ..node import (
    ACCEPTANCE_POLICIES,
    RATING_POLICIES,
    SELECTION_POLICIES,
    FulfillmentPlan,
    MeterBinding,
    Node,
    NodeConfig,
    OfferPolicy,
    Selection,
    UnmetReason,
)
from ..pricing import make_policy
from ..transactions import Identity, Transaction, TxKind
from .protocol import Envelope, filter_trace, step_numbers, trade_keys
from .scenario import Fault, FaultKind, Scenario

log = logging.getLogger(__name__)

ZERO = Decimal("0.000")
MARKET = "market"
LEDGER = "ledger"
MAX_DRAIN_TICKS = 100_000


@dataclass
class TradeRecord:
    """Ground truth for one negotiated trade, kept outside the ledger."""

    trade_ref: str
    demand_id: str
    buyer: str
    supplier: str
    offer_id: str
    utility: str
    quantity: Decimal
    unit_price: Decimal
    cost: Decimal
    keys: frozenset[str]
    status: str = "proposed"
    contract_id: str | None = None
    pushed: Decimal = ZERO
    measured: Decimal | None = None
    proof: DeliveryProof | None = None  # the genuine proof the buyer built
    tampered: bool = False
    final_state: ContractState | None = None
    payout: Decimal = ZERO
    refund: Decimal = ZERO


@dataclass
class SimResult:
    scenario: Scenario
    seed: str
    ledger: Ledger
    market: Market
    nodes: dict[str, Node]
    names: dict[bytes, str]
    trace: list[Envelope]
    events: list[str]
    plans: list[FulfillmentPlan]
    trades: dict[str, TradeRecord]
    notifications: list[tuple[int, str, Notification]]
    meters: list[Meter] = field(default_factory=list)

    def name_of(self, account: AccountId) -> str:
        return self.names.get(account.id, account.hex[:12])

    # -- exports ---------------------------------------------------------------------

    def ledger_jsonl(self) -> str:
        return self.ledger.export_jsonl()

    def trace_log(self) -> str:
        return "".join(e.log_line() + "\n" for e in self.trace)

    def offers_jsonl(self) -> str:
        """Every offer the market listed, with its listing tick, one per line."""
        return "".join(
            json.dumps(to_jsonable(o), sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
            for o in self.market.submitted
        )

    # -- views -----------------------------------------------------------------------

    def filtered(self, trade_ref: str) -> list[Envelope]:
        return filter_trace(self.trace, self.trades[trade_ref].keys)

    def steps(self, trade_ref: str) -> list[int | str]:
        return step_numbers(self.filtered(trade_ref))

    def contracts(self) -> list[SmartContract]:
        return list(self.ledger.state.contracts.values())

    def trade_flows(self) -> dict[str, tuple[Decimal, Decimal]]:
        """Per participant: (payouts received as supplier, payouts made as buyer)."""
        flows: dict[str, tuple[Decimal, Decimal]] = {}
        for c in self.contracts():
            s, b = self.name_of(c.supplier), self.name_of(c.buyer)
            rs, ps = flows.get(s, (ZERO, ZERO))
            flows[s] = (rs + c.payout, ps)
            rb, pb = flows.get(b, (ZERO, ZERO))
            flows[b] = (rb, pb + c.payout)
        return flows

    def trade_net(self, name: str) -> Decimal:
        rev, spend = self.trade_flows().get(name, (ZERO, ZERO))
        return rev - spend

    def balances(self) -> list[tuple[str, Decimal, Decimal]]:
        rows = []
        for w in self.ledger.state.book.wallets.values():
            rows.append((self.name_of(w.owner), w.free, w.escrow_total))
        return sorted(rows)

    def unmet(self) -> list[tuple[str, UnmetReason, Decimal]]:
        return [(p.demand_id, u.reason, u.quantity) for p in self.plans for u in p.unmet]

    def summary_text(self) -> str:
        state = self.ledger.state
        total_free, total_held = state.book.totals()
        report = verify_chain(self.ledger)
        lines = [
            f"scenario {self.scenario.name} seed {self.seed!r}",
            f"ledger height {self.ledger.height} tip {self.ledger.tip.hash.hex()} {report}",
            "",
            "balances (free, escrowed, total):",
        ]
        for name, free, esc in self.balances():
            lines.append(f"  {name:<16} {fmt(free):>12} {fmt(esc):>10} {fmt(free + esc):>12}")
        lines.append(f"  {'sum':<16} {'':>12} {'':>10} {fmt(total_free + total_held):>12}  minted {fmt(state.book.total_minted)}")
        lines += ["", "trade net (revenue - spend):"]
        for name, (rev, spend) in sorted(self.trade_flows().items()):
            lines.append(f"  {name:<16} revenue {fmt(rev):>10} spend {fmt(spend):>10} net {fmt(rev - spend):>10}")
        lines += ["", "contracts:"]
        for c in self.contracts():
            lines.append(
                f"  {c.contract_id} {c.trade_ref} {self.name_of(c.buyer)}<-{self.name_of(c.supplier)} "
                f"{c.utility} {fmt(c.quantity)}@{fmt(c.unit_price)} {c.state.value} "
                f"delivered {fmt(c.delivered)} payout {fmt(c.payout)} refund {fmt(c.refund)}"
            )
        lines += ["", "unmet demand:"]
        for did, reason, qty in self.unmet():
            lines.append(f"  {did} {reason.value} {fmt(qty)}")
        lines += ["", "events:"]
        lines += [f"  {e}" for e in self.events]
        return "\n".join(lines) + "\n"


class Simulation:
    def __init__(self, scenario: Scenario, seed: str | int | None = None):
        self.scenario = sc = scenario
        self.seed = sc.seed if seed is None else str(seed)
        self.now = 0
        self.state_id = Identity.from_seed(sc.state, self.seed)
        self.market_id = Identity.from_seed(MARKET, self.seed)
        self.authorities = [Identity.from_seed(a, self.seed) for a in sc.authorities]
        self.ledger = Ledger.create(self.state_id, self.authorities, chain_id=sc.name,
                                    tolerance=sc.dispute_tolerance)
        self.market = Market(self.ledger.query_ratings)
        self.names: dict[bytes, str] = {self.state_id.account.id: sc.state, self.market_id.account.id: MARKET}
        for a, name in zip(self.authorities, sc.authorities):
            self.names[a.account.id] = name
        self.nodes: dict[str, Node] = {}
        self.meters: list[Meter] = []
        self._queue: list[tuple[int, int, Envelope]] = []
        self._seq = 0
        self.trace: list[Envelope] = []
        self.events: list[str] = []
        self.plans: dict[str, FulfillmentPlan] = {}
        self.trades: dict[str, TradeRecord] = {}
        self.notifications: list[tuple[int, str, Notification]] = []
        self.mempool: list[Transaction] = []
        self._tx_owner: dict[str, str] = {}
        self._tx_trade: dict[str, str] = {}
        self._contract_trade: dict[str, str] = {}
        self._offer_reading: dict[str, str] = {}
        self._armed: list[Fault] = list(sc.faults)
        self._handlers: dict[int | str, Callable[[Envelope, str], None]] = {
            1: self._on_reading, 2: self._on_offer, 3: self._on_listing, 4: self._on_demand,
            5: self._on_ranked, 6: self._on_selection, 7: self._on_proposal, 8: self._on_acceptance,
            9: self._to_mempool, 10: self._on_confirmation, 11: self._on_supply, 12: self._on_receipt,
            13: self._to_mempool, 14: self._on_settlement, 15: self._to_mempool,
            "revoke": self._to_mempool, "transfer": self._to_mempool, "declined": self._on_declined,
            "offer-gone": self._on_offer_gone, "rejected": self._on_rejected, "low-credit": _ignore,
        }
        self._build_nodes()

    # -- setup -----------------------------------------------------------------------

    def _clock(self) -> int:
        return self.now

    def _build_nodes(self) -> None:
        sc = self.scenario
        for i, spec in enumerate(sc.nodes):
            ident = Identity.from_seed(spec.name, self.seed)
            self.names[ident.account.id] = spec.name
            bindings = []
            for j, m in enumerate(spec.meters):
                meter = Meter.from_seed(m.id, ident.account, m.utility, self.seed)
                driver = None
                if m.driver is not None:
                    try:
                        driver = DRIVERS[m.driver.type](meter_id=m.id, utility=UTILITIES.get(m.utility),
                                                        clock=self._clock, **m.driver.params)
                    except (TypeError, ValueError) as exc:
                        raise ScenarioInvalid(f"driver: {exc}", f"nodes[{i}].meters[{j}].driver") from exc
                bindings.append(MeterBinding(meter, m.direction, driver))
            declared = {(b.meter.utility, b.direction) for b in bindings if b.driver is None}
            wanted = [(u, Direction.PRODUCED, "out") for u in sorted(spec.offers)]
            wanted += [(u, Direction.CONSUMED, "in") for u in sorted({d.utility for d in spec.demand})]
            for u, direction, suffix in wanted:
                if (u, direction) not in declared:
                    meter = Meter.from_seed(f"{spec.name}:{u}:{suffix}", ident.account, u, self.seed)
                    bindings.append(MeterBinding(meter, direction))
                    declared.add((u, direction))
            offers = {
                u: OfferPolicy(make_policy(o.policy, o.params), o.base_price, o.target_stock, o.validity)
                for u, o in spec.offers.items()
            }
            config = NodeConfig(
                name=spec.name, identity=ident, meters=bindings, demand_schedule=list(spec.demand),
                offer_policies=offers, reserve=dict(spec.reserve),
                low_credit_threshold=spec.low_credit_threshold,
                rating_policy=RATING_POLICIES[spec.rating_policy],
                selection_policy=SELECTION_POLICIES[spec.selection_policy],
                acceptance_policy=ACCEPTANCE_POLICIES[spec.acceptance_policy],
                delivery_ratio=spec.delivery_ratio, meter_bias=spec.meter_bias,
            )
            self.nodes[spec.name] = Node(config, self.ledger.state, contract_window=sc.contract_window)
            for b in bindings:
                self.meters.append(b.meter)
                self._submit(self.state_id.tx(TxKind.METER_REGISTER, b.meter.registration()), sc.state)

    def identity(self, name: str) -> Identity:
        if name == self.scenario.state:
            return self.state_id
        return self.nodes[name].identity

    # -- messaging ---------------------------------------------------------------------

    def send(self, msg: int | str, sender: str, to: tuple[str, ...], payload: Any, summary: str,
             refs=frozenset(), *, latency: int | None = None) -> Envelope:
        delay = self.scenario.latency if latency is None else latency
        self._seq += 1
        env = Envelope(
            seq=self._seq, msg_no=msg if isinstance(msg, int) else None, sender=sender, to=tuple(to),
            payload=payload, send_tick=self.now, deliver_tick=self.now + delay, summary=summary,
            label=msg if isinstance(msg, str) else "", refs=frozenset(refs),
        )
        heapq.heappush(self._queue, (env.deliver_tick, env.seq, env))
        return env

    def note(self, text: str) -> None:
        self.events.append(f"tick={self.now} {text}")

    def _fault(self, kind: FaultKind) -> Fault | None:
        """Consume the first armed fault of ``kind`` that is due."""
        for f in self._armed:
            if f.kind == kind and self.now >= f.at:
                self._armed.remove(f)
                return f
        return None

    def _submit(self, tx: Transaction, owner: str, trade_ref: str | None = None) -> None:
        self.mempool.append(tx)
        self._tx_owner[tx.tx_id] = owner
        if trade_ref is not None:
            self._tx_trade[tx.tx_id] = trade_ref

    # -- the loop --------------------------------------------------------------------------

    def run(self) -> SimResult:
        sc = self.scenario
        t = 0
        while True:
            self.now = t
            if t <= sc.end_tick:
                self._poll()
                self._mints()
                self._payments()
                self._demand()
            self._deliver_due()
            self._seal()
            self._check_credit()
            if t >= sc.end_tick and not self._queue and not self.mempool and not self.ledger.state.active_contracts():
                break
            t += 1
            if t > sc.end_tick + MAX_DRAIN_TICKS:
                raise RuntimeError("simulation failed to drain")
        for f in self._armed:
            self.note(f"fault {f.kind.value}@{f.at} never fired")
        return SimResult(
            scenario=sc, seed=self.seed, ledger=self.ledger, market=self.market, nodes=self.nodes,
            names=self.names, trace=self.trace, events=self.events, plans=list(self.plans.values()),
            trades=self.trades, notifications=self.notifications, meters=self.meters,
        )

    def _poll(self) -> None:
        for node in self.nodes.values():
            for r in node.poll_meters(self.now):
                key = f"{r.meter_id}:{r.nonce}"
                self.send(1, r.meter_id, (node.name,), r,
                          f"reading {r.meter_id}#{r.nonce} {r.utility} {fmt(r.quantity)}",
                          {f"reading:{key}"}, latency=self.scenario.meter_latency)

    def _mints(self) -> None:
        for m in self.scenario.mints:
            if m.tick == self.now:
                self._submit(mint(self.state_id, self.identity(m.to).account, m.amount), self.scenario.state)

    def _payments(self) -> None:
        for p in self.scenario.payments:
            if p.tick == self.now:
                tx = transfer(self.identity(p.sender), self.identity(p.to).account, p.amount, p.memo)
                memo = f" ({p.memo})" if p.memo else ""
                self.send("transfer", p.sender, (LEDGER,), tx, f"transfer {fmt(p.amount)} to {p.to}{memo}")

    def _demand(self) -> None:
        for node in self.nodes.values():
            for d in node.config.demand_schedule:
                if d.tick != self.now:
                    continue
                plan = node.satisfy_demand(d.utility, d.quantity, self.now)
                self.plans[plan.demand_id] = plan
                if plan.self_supplied > 0:
                    self.note(f"{plan.demand_id} self-supplied {fmt(plan.self_supplied)} {d.utility}")
                need = plan.market_need
                if need > 0:
                    self.send(4, node.name, (MARKET,), (plan.demand_id, d.utility, need),
                              f"demand {plan.demand_id} {d.utility} {fmt(need)}", {f"demand:{plan.demand_id}"})

    def _deliver_due(self) -> None:
        while self._queue and self._queue[0][0] <= self.now:
            _, _, env = heapq.heappop(self._queue)
            self.trace.append(env)
            for recipient in env.to:
                self._handlers[env.msg_no or env.label](env, recipient)

    def _seal(self) -> None:
        state = self.ledger.state
        due = any(c.deadline < self.now for c in state.active_contracts())
        if not self.mempool and not due:
            return
        height = self.ledger.height + 1
        want = self.ledger.scheduled_authority(height)
        miner = next(a for a in self.authorities if a.account == want)
        pending, self.mempool = self.mempool, []
        result = self.ledger.append_block(pending, miner, self.now)
        for rec in result.receipts:
            ref = self._tx_trade.get(rec.tx_id)
            if rec.kind == TxKind.CONTRACT_CREATE and ref is not None:
                tr = self.trades[ref]
                tr.contract_id, tr.status = rec.contract.contract_id, "active"
                self._contract_trade[tr.contract_id] = ref
                self.send(10, LEDGER, (tr.buyer, tr.supplier), rec.contract,
                          f"contract {tr.contract_id} active escrow {fmt(rec.contract.escrow)} deadline {rec.contract.deadline}",
                          {f"trade:{ref}"})
            elif rec.settlement is not None:
                self._settled(rec.settlement)
        for rej in result.rejected:
            owner = self._tx_owner.get(rej.tx.tx_id, LEDGER)
            ref = self._tx_trade.get(rej.tx.tx_id)
            to = (owner,)
            if rej.tx.kind == TxKind.CONTRACT_CREATE and ref is not None:
                tr = self.trades[ref]
                tr.status = "rejected"
                to = (MARKET, tr.buyer, tr.supplier)
            self.note(f"rejected {rej}")
            self.send("rejected", LEDGER, to, rej, str(rej), {f"trade:{ref}"} if ref else ())
        for s in result.expired:
            self._settled(s)

    def _settled(self, s: Settlement) -> None:
        ref = self._contract_trade.get(s.contract_id)
        if ref is None:
            return
        tr = self.trades[ref]
        tr.status, tr.final_state, tr.payout, tr.refund = "settled", s.state, s.payout, s.refund
        self.send(14, LEDGER, (tr.buyer, tr.supplier), s,
                  f"{s.state.value} {s.contract_id} delivered {fmt(s.delivered)} payout {fmt(s.payout)} refund {fmt(s.refund)}",
                  {f"trade:{ref}"})

    def _check_credit(self) -> None:
        for node in self.nodes.values():
            n = node.check_credit()
            if n is not None:
                self.notifications.append((self.now, node.name, n))
                self.send("low-credit", LEDGER, (node.name,), n,
                          str(n))

    # -- handlers ------------------------------------------------------------------------

    def _to_mempool(self, env: Envelope, _recipient: str) -> None:
        ref = next((r[6:] for r in env.refs if r.startswith("trade:")), None)
        self._submit(env.payload, env.sender, ref)

    def _on_reading(self, env: Envelope, name: str) -> None:
        node = self.nodes[name]
        r: MeterReading = env.payload
        try:
            offer = node.on_production(r, self.ledger.state.meters, self.now)
        except UtilexError as exc:
            self.note(f"{name} ignored reading {r.meter_id}#{r.nonce}: {exc}")
            return
        if offer is None:
            return
        key = f"{r.meter_id}:{r.nonce}"
        self._offer_reading[offer.offer_id] = key
        if self._fault(FaultKind.DROP_OFFER):
            self.note(f"fault DropOffer: offer {offer.offer_id} from {name} lost before the market")
            return
        self.send(2, name, (MARKET,), offer,
                  f"offer {offer.offer_id} {offer.utility} {fmt(offer.quantity)}@{fmt(offer.unit_price)} "
                  f"valid {offer.valid_from}..{offer.valid_until}",
                  {f"reading:{key}", f"offer:{offer.offer_id}"})

    def _on_offer(self, env: Envelope, _m: str) -> None:
        offer: Offer = env.payload
        if not offer.signature_ok():
            self.send("rejected", MARKET, (env.sender,), offer, f"offer {offer.offer_id}: bad signature",
                      env.refs)
            return
        self.send(3, MARKET, (LEDGER,), offer,
                  f"reputation query {env.sender} for offer {offer.offer_id}", env.refs)

    def _on_listing(self, env: Envelope, _l: str) -> None:
        offer: Offer = env.payload
        try:
            listed = self.market.submit_offer(offer, self.now)
        except MarketError as exc:
            self.note(f"offer {offer.offer_id} refused: {type(exc).__name__}: {exc}")
            return
        self.note(f"listed {offer.offer_id} reputation {listed.reputation.value:.3f}")

    def _on_demand(self, env: Envelope, _m: str) -> None:
        demand_id, utility, need = env.payload
        buyer = self.nodes[env.sender]
        ranked = self.market.query_offers(utility, need, self.now, exclude=buyer.account)
        listing = ", ".join(f"{o.offer_id}:{fmt(o.available())}@{fmt(o.unit_price)}/r{o.reputation.value:.2f}"
                            for o in ranked)
        self.send(5, MARKET, (env.sender,), (demand_id, ranked),
                  f"{len(ranked)} offers for {demand_id} [{listing}]", env.refs)

    def _on_ranked(self, env: Envelope, name: str) -> None:
        demand_id, ranked = env.payload
        node = self.nodes[name]
        plan = self.plans[demand_id]
        for sel in node.select(plan, ranked, self.now):
            self._open_trade(node, plan, sel)
        for u in plan.unmet:
            self.note(f"{demand_id} unmet {u.reason.value} {fmt(u.quantity)}")

    def _open_trade(self, node: Node, plan: FulfillmentPlan, sel: Selection) -> None:
        t = sel.terms
        supplier = self.names[t.supplier.id]
        keys = trade_keys(self._offer_reading.get(t.offer_id), t.offer_id, plan.demand_id, sel.trade_ref)
        self.trades[sel.trade_ref] = TradeRecord(
            sel.trade_ref, plan.demand_id, node.name, supplier, t.offer_id, t.utility, t.quantity,
            t.unit_price, sel.cost, keys,
        )
        self.send(6, node.name, (MARKET,), sel,
                  f"select {t.offer_id} {fmt(t.quantity)}@{fmt(t.unit_price)} trade {sel.trade_ref}",
                  {f"trade:{sel.trade_ref}"})

    def _on_selection(self, env: Envelope, _m: str) -> None:
        sel: Selection = env.payload
        t = sel.terms
        if self._fault(FaultKind.EXPIRE_MID_NEGOTIATION):
            self.market.offers.pop(t.offer_id, None)
            self.note(f"fault ExpireMidNegotiation: offer {t.offer_id} expired during negotiation")
        try:
            self.market.reserve(t.offer_id, t.quantity, self.now)
        except MarketError as exc:
            self.trades[t.trade_ref].status = "offer-gone"
            self.send("offer-gone", MARKET, (env.sender,), sel, f"{type(exc).__name__}: {exc}", env.refs)
            return
        supplier = self.trades[t.trade_ref].supplier
        self.send(7, MARKET, (supplier,), sel,
                  f"propose {t.trade_ref} {fmt(t.quantity)} {t.utility}@{fmt(t.unit_price)} deadline {t.deadline}",
                  env.refs)

    def _on_proposal(self, env: Envelope, name: str) -> None:
        sel: Selection = env.payload
        sig = self.nodes[name].consider(sel.terms)
        if sig is None:
            self.send("declined", name, (MARKET,), sel, f"decline {sel.trade_ref}", env.refs)
            return
        self.send(8, name, (MARKET,), (sel, sig), f"accept {sel.trade_ref}", env.refs)

    def _on_acceptance(self, env: Envelope, _m: str) -> None:
        sel, supplier_sig = env.payload
        tx = self.market_id.tx(TxKind.CONTRACT_CREATE, ContractCreate(sel.terms, sel.buyer_sig, supplier_sig))
        self.send(9, MARKET, (LEDGER,), tx, f"ContractCreate {sel.trade_ref} tx {tx.tx_id}", env.refs)

    def _on_declined(self, env: Envelope, recipient: str) -> None:
        sel: Selection = env.payload
        tr = self.trades[sel.trade_ref]
        if recipient == MARKET:
            tr.status = "declined"
            self.market.release(sel.terms.offer_id, sel.terms.quantity, self.now)
            self.send("declined", MARKET, (tr.buyer,), sel, f"{tr.supplier} declined {sel.trade_ref}", env.refs)
        else:
            self._abandon(tr, UnmetReason.NO_SUPPLY)

    def _on_offer_gone(self, env: Envelope, name: str) -> None:
        self._abandon(self.trades[env.payload.trade_ref], UnmetReason.NO_SUPPLY)

    def _abandon(self, tr: TradeRecord, reason: UnmetReason) -> None:
        self.nodes[tr.buyer].release_commitment(tr.cost)
        self.plans[tr.demand_id].add_unmet(reason, tr.quantity)
        self.note(f"{tr.demand_id} unmet {reason.value} {fmt(tr.quantity)} ({tr.trade_ref} {tr.status})")

    def _on_rejected(self, env: Envelope, recipient: str) -> None:
        rej = env.payload
        tx = getattr(rej, "tx", None)
        if tx is None or tx.kind != TxKind.CONTRACT_CREATE:
            return
        t = tx.payload.terms
        tr = self.trades[t.trade_ref]
        if recipient == MARKET:
            self.market.release(t.offer_id, t.quantity, self.now)
        elif recipient == tr.buyer:
            reason = (UnmetReason.INSUFFICIENT_CREDITS if type(rej.error).__name__ == "InsufficientCredits"
                      else UnmetReason.NO_SUPPLY)
            self._abandon(tr, reason)
        elif recipient == tr.supplier:
            self.nodes[recipient].unreserve(t.utility, t.quantity)

    def _on_confirmation(self, env: Envelope, name: str) -> None:
        c: SmartContract = env.payload
        tr = self.trades[c.trade_ref]
        node = self.nodes[name]
        if name == tr.buyer:
            node.release_commitment(tr.cost)
            self.plans[tr.demand_id].contracts.append(c.contract_id)
            return
        try:
            reading = node.push(c.contract_id, self.now)
        except ContractNotActive as exc:
            self.note(f"{name} cannot deliver {c.contract_id}: {exc}")
            return
        if reading is None:
            tx = node.revoke_tx(c.contract_id)
            self.send("revoke", name, (LEDGER,), tx, f"revoke {c.contract_id} by {name}: nothing to deliver",
                      env.refs)
            return
        tr.pushed = reading.quantity
        self.send(11, reading.meter_id, (name, tr.buyer), (c.contract_id, reading),
                  f"supplied {fmt(reading.quantity)} {reading.utility} for {c.contract_id}",
                  env.refs, latency=self.scenario.meter_latency)

    def _on_supply(self, env: Envelope, name: str) -> None:
        cid, s = env.payload
        tr = self.trades[self._contract_trade[cid]]
        if name != tr.buyer:
            return
        node = self.nodes[name]
        c = node.receive(cid, s.quantity, self.now)
        node.consume(tr.utility, s.quantity)
        tr.measured = c.quantity
        self.send(12, c.meter_id, (name,), (cid, s, c),
                  f"received {fmt(s.quantity)} {tr.utility} measured {fmt(c.quantity)}",
                  env.refs, latency=self.scenario.meter_latency)

    def _on_receipt(self, env: Envelope, name: str) -> None:
        cid, s, c = env.payload
        node = self.nodes[name]
        tr = self.trades[self._contract_trade[cid]]
        try:
            proof = node.prove(cid, s, c)
        except Disputed as exc:
            tr.proof = exc.proof
            tx = node.revoke_tx(cid, exc.proof)
            self.send("revoke", name, (LEDGER,), tx, f"revoke {cid} by {name}: {exc}", env.refs)
            return
        except ContractNotActive as exc:
            self.note(f"{name} cannot prove {cid}: {exc}")
            return
        tr.proof = proof
        if self._fault(FaultKind.TAMPER_READING):
            tr.tampered = True
            bumped = replace(proof.consumer_reading, quantity=proof.consumer_reading.quantity + 1)
            proof = replace(proof, consumer_reading=bumped)
            self.note(f"fault TamperReading: consumer reading for {cid} altered after signing")
        tx = node.fulfill_tx(cid, proof)
        self.send(13, name, (LEDGER,), tx, f"fulfill {cid} delivered {fmt(proof.quantity)}", env.refs)

    def _on_settlement(self, env: Envelope, name: str) -> None:
        s: Settlement = env.payload
        tr = self.trades[self._contract_trade[s.contract_id]]
        if name != tr.buyer or s.state not in RATEABLE:
            return
        node = self.nodes[name]
        tx = node.rate(s.contract_id)
        self.send(15, name, (LEDGER,), tx, f"rate {s.contract_id} {tx.payload.score}", env.refs)


def _ignore(env: Envelope, recipient: str) -> None:
    pass


def run(scenario: Scenario, seed: str | int | None = None) -> SimResult:
    """Run ``scenario`` to completion; identical inputs give identical outputs."""
    return Simulation(scenario, seed).run()
