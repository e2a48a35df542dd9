from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

import pytest

from utilex.ledger import Devnet, create_contract
from utilex.metering import Direction, Meter, build_proof, sign_reading
from utilex.transactions import Identity

SEED = "tests"


@dataclass
class Party:
    identity: Identity
    meters: dict

    @property
    def account(self):
        return self.identity.account

    def meter(self, utility: str, direction: Direction) -> Meter:
        return self.meters[(utility, direction)]


def make_party(net: Devnet, name: str, utilities=("electricity", "water", "data")) -> Party:
    ident = Identity.from_seed(name, SEED)
    meters = {}
    for u in utilities:
        for d, tag in ((Direction.PRODUCED, "out"), (Direction.CONSUMED, "in")):
            m = Meter.from_seed(f"{name}/{u}/{tag}", ident.account, u, SEED)
            meters[(u, d)] = m
            net.register_meter(m)
    return Party(ident, meters)


class World:
    """A devnet with a market submitter and helpers for common ledger flows."""

    def __init__(self):
        self.net = Devnet(seed=SEED)
        self.market = Identity.from_seed("market", SEED)
        self.parties: dict[str, Party] = {}

    @property
    def state(self):
        return self.net.state

    def party(self, name: str, funds=0) -> Party:
        p = self.parties.get(name)
        if p is None:
            p = self.parties[name] = make_party(self.net, name)
        if funds:
            self.net.fund(p.account, funds)
        return p

    def contract_tx(self, buyer: Party, supplier: Party, quantity, price, deadline=None, utility="electricity"):
        deadline = self.net.now + 10 if deadline is None else deadline
        return create_contract(self.market, buyer.identity, supplier.identity, utility,
                               Decimal(str(quantity)), Decimal(str(price)), deadline)

    def open(self, buyer: Party, supplier: Party, quantity, price, deadline=None, utility="electricity"):
        tx = self.contract_tx(buyer, supplier, quantity, price, deadline, utility)
        res = self.net.commit(tx)
        assert not res.rejected, res.rejected
        return self.state.contract(tx.tx_id)

    def readings(self, contract, supplied, consumed, tick=None):
        tick = self.net.now if tick is None else tick
        s = sign_reading(self.parties_by_account(contract.supplier).meter(contract.utility, Direction.PRODUCED),
                         Direction.PRODUCED, Decimal(str(supplied)), tick)
        c = sign_reading(self.parties_by_account(contract.buyer).meter(contract.utility, Direction.CONSUMED),
                         Direction.CONSUMED, Decimal(str(consumed)), tick)
        return s, c

    def proof(self, contract, supplied, consumed=None):
        s, c = self.readings(contract, supplied, supplied if consumed is None else consumed)
        return build_proof(contract, s, c, self.state.meters, self.state.tolerance)

    def parties_by_account(self, account) -> Party:
        return next(p for p in self.parties.values() if p.account == account)


@pytest.fixture
def world() -> World:
    return World()


# -- acceptance reporting ---------------------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, check): acceptance criterion a test demonstrates")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, check = m.args
    titles = getattr(item.module, "CRITERIA", {})
    entry = _CRITERIA.setdefault(number, {"title": titles.get(number, ""), "checks": {}})
    ok = rep.passed and rep.when == "call"
    if check not in entry["checks"] or not ok:
        entry["checks"][check] = ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        checks = entry["checks"]
        passed = sum(checks.values())
        verdict = "PASS" if passed == len(checks) else "FAIL"
        failed = [c for c, ok in checks.items() if not ok]
        extra = f"  failed: {', '.join(failed)}" if failed else ""
        tr.write_line(f"criterion {number} {verdict}  {entry['title']} ({passed}/{len(checks)} checks){extra}")
