"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage, parse or scenario error.
"""

from __future__ import annotations

import argparse
import json
import sys
from decimal import Decimal
from pathlib import Path

from .encoding import fmt, from_jsonable, to_jsonable
from .errors import LedgerError, NoSuchTarget, ScenarioInvalid
from .ledger import Ledger, load_blocks, verify_export
from .market import Market, Offer

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2

PARTICIPANTS_FILE = "participants.json"
OFFERS_FILE = "offers.jsonl"


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


# -- loading --------------------------------------------------------------------------

def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _load_ledger(path: str) -> Ledger:
    try:
        return Ledger.from_jsonl(_read(path))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    except LedgerError as exc:
        raise UsageError(f"{path}: chain does not verify ({exc}); run `verify` for details") from exc


def _names(ledger_path: str, explicit: str | None) -> dict[str, str]:
    """Account id (hex) -> participant name, from the run's participants file if present."""
    path = Path(explicit) if explicit else Path(ledger_path).with_name(PARTICIPANTS_FILE)
    if not path.exists():
        if explicit:
            raise UsageError(f"cannot read {explicit}")
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _label(names: dict[str, str], account) -> str:
    return names.get(account.hex, account.hex[:12])


# -- commands ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    from .simnet import Scenario, inject_fault, parse_fault, run

    try:
        scenario = Scenario.load(args.scenario)
        for spec in args.fault or ():
            f = parse_fault(spec)
            scenario = inject_fault(scenario, f.kind, f.at)
    except ScenarioInvalid as exc:
        print(f"error: invalid scenario at {exc.location}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, NoSuchTarget) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run(scenario, seed=args.seed)
    except ScenarioInvalid as exc:
        print(f"error: invalid scenario at {exc.location}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = {aid.hex(): name for aid, name in sorted(result.names.items(), key=lambda kv: kv[1])}
    files = {
        "ledger.jsonl": result.ledger_jsonl(),
        "trace.log": result.trace_log(),
        "summary.txt": result.summary_text(),
        OFFERS_FILE: result.offers_jsonl(),
        PARTICIPANTS_FILE: _dump(names) + "\n",
    }
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    print(result.summary_text(), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    text = _read(args.ledger)
    try:
        blocks = load_blocks(text)
    except ValueError as exc:
        raise UsageError(f"{args.ledger}: {exc}") from exc
    report = verify_export(text)
    if args.format == "json":
        print(_dump({"ok": report.ok, "height": report.height, "reason": report.reason,
                     "blocks": len(blocks)}))
    elif report:
        print(f"ok: {len(blocks)} blocks, tip {blocks[-1].hash.hex()}")
    else:
        print(f"invalid at height {report.height}: {report.reason}")
    return EXIT_OK if report else EXIT_VERIFY


def cmd_balances(args) -> int:
    ledger = _load_ledger(args.ledger)
    names = _names(args.ledger, args.participants)
    book = ledger.state.book
    rows = sorted(
        (_label(names, w.owner), w.owner.hex, w.free, w.escrow_total) for w in book.wallets.values()
    )
    total = sum((f + e for _, _, f, e in rows), Decimal("0.000"))
    if args.format == "json":
        print(_dump({
            "accounts": [{"name": n, "account": a, "free": fmt(f), "escrowed": fmt(e), "total": fmt(f + e)}
                         for n, a, f, e in rows],
            "sum": fmt(total), "minted": fmt(book.total_minted),
        }))
        return EXIT_OK
    body = [[n, a[:16], fmt(f), fmt(e), fmt(f + e)] for n, a, f, e in rows]
    body.append(["sum", "", "", "", fmt(total)])
    body.append(["minted", "", "", "", fmt(book.total_minted)])
    print(_table(["name", "account", "free", "escrowed", "total"], body))
    return EXIT_OK


def _load_offers(path: Path) -> list[Offer]:
    if not path.exists():
        raise UsageError(f"cannot read {path}")
    offers = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                offers.append(from_jsonable(Offer, json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise UsageError(f"{path} line {n}: {exc}") from exc
    return offers


def _pricing_params(o: Offer) -> dict:
    """Policy parameters plus the inputs the quote was computed from."""
    if o.pricing is None:
        return {}
    p = o.pricing
    return {**dict(p.params), "base_price": p.base_price, "target_stock": p.target_stock,
            "stock": to_jsonable(p.stock)}


def cmd_market_ls(args) -> int:
    ledger = _load_ledger(args.ledger)
    names = _names(args.ledger, args.participants)
    offers_path = Path(args.offers) if args.offers else Path(args.ledger).with_name(OFFERS_FILE)
    at = args.at if args.at is not None else ledger.tip.timestamp
    # only offers listed, and blocks sealed, by the query tick
    offers = [o for o in _load_offers(offers_path) if o.submitted_at <= at]
    blocks = [b for b in ledger.blocks if b.timestamp <= at]
    market = Market.rebuild(offers, blocks, at)
    book = market.book(args.utility, at)
    rows = []
    for o in book:
        rows.append({
            "offer_id": o.offer_id, "supplier": _label(names, o.supplier), "utility": o.utility,
            "qty": fmt(o.available()), "unit_price": fmt(o.unit_price),
            "reputation": f"{o.reputation.value:.3f}", "valid_until": o.valid_until,
            "policy": o.pricing.policy if o.pricing else "",
            "params": _pricing_params(o),
        })
    if args.format == "json":
        print(_dump({"at": at, "utility": args.utility, "offers": rows}))
        return EXIT_OK
    headers = ["offer_id", "supplier", "qty", "unit_price", "reputation", "valid_until", "policy", "params"]
    print(_table(headers, [
        [r["offer_id"], r["supplier"], r["qty"], r["unit_price"], r["reputation"], str(r["valid_until"]),
         r["policy"], json.dumps(r["params"], sort_keys=True, separators=(",", ":"))]
        for r in rows
    ]))
    return EXIT_OK


def cmd_inspect(args) -> int:
    ledger = _load_ledger(args.ledger)
    names = _names(args.ledger, args.participants)
    state = ledger.state
    if args.contract is None:
        rows = [{
            "contract_id": c.contract_id, "trade_ref": c.trade_ref, "buyer": _label(names, c.buyer),
            "supplier": _label(names, c.supplier), "utility": c.utility, "quantity": fmt(c.quantity),
            "unit_price": fmt(c.unit_price), "state": c.state.value, "payout": fmt(c.payout),
            "refund": fmt(c.refund),
        } for c in state.contracts.values()]
        if args.format == "json":
            print(_dump({"contracts": rows}))
        else:
            keys = list(rows[0]) if rows else ["contract_id", "state"]
            print(_table(keys, [[r[k] for k in keys] for r in rows]))
        return EXIT_OK
    c = state.contracts.get(args.contract)
    if c is None:
        matches = [k for k in state.contracts if k.startswith(args.contract)]
        if len(matches) != 1:
            raise UsageError(f"no unique contract matching {args.contract!r}")
        c = state.contracts[matches[0]]
    history = state.history.get(c.contract_id, [])
    doc = {
        "contract_id": c.contract_id, "trade_ref": c.trade_ref, "offer_id": c.offer_id,
        "buyer": _label(names, c.buyer), "supplier": _label(names, c.supplier), "utility": c.utility,
        "quantity": fmt(c.quantity), "unit_price": fmt(c.unit_price), "escrow": fmt(c.escrow),
        "deadline": c.deadline, "state": c.state.value, "delivered": fmt(c.delivered),
        "payout": fmt(c.payout), "refund": fmt(c.refund),
        "revoked_by": _label(names, c.revoked_by) if c.revoked_by else None,
        "history": [to_jsonable(h) for h in history],
    }
    if args.format == "json":
        print(_dump(doc))
        return EXIT_OK
    for k, v in doc.items():
        if k != "history":
            print(f"{k:<12} {'' if v is None else v}")
    print("history:")
    print(_table(["height", "tick", "event", "state", "delivered", "payout", "refund"], [
        [str(h.height), str(h.tick), h.event, h.state.value, fmt(h.delivered), fmt(h.payout), fmt(h.refund)]
        for h in history
    ]))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="utilex", description="Multi-utility peer-to-peer trading simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write ledger.jsonl, trace.log, summary.txt")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", help="override the scenario's key seed")
    r.add_argument("--fault", action="append", metavar="KIND[:TICK]",
                   help="inject a fault: drop, expire or tamper (repeatable)")
    r.set_defaults(func=cmd_run)

    def ledger_cmd(name, func, help_):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--ledger", required=True)
        c.add_argument("--format", choices=("table", "json"), default="table")
        c.set_defaults(func=func)
        return c

    ledger_cmd("verify", cmd_verify, "verify a ledger export")
    for name, func, help_ in (("balances", cmd_balances, "wallet balances"),
                              ("market-ls", cmd_market_ls, "the offer book at a tick"),
                              ("inspect", cmd_inspect, "contracts and their history")):
        c = ledger_cmd(name, func, help_)
        c.add_argument("--participants", help=f"names file (default: {PARTICIPANTS_FILE} next to the ledger)")
        if name == "market-ls":
            c.add_argument("--utility")
            c.add_argument("--at", type=int, help="tick (default: the ledger tip)")
            c.add_argument("--offers", help=f"offers file (default: {OFFERS_FILE} next to the ledger)")
        if name == "inspect":
            c.add_argument("--contract", help="contract id or unique prefix")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
