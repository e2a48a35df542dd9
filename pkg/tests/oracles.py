"""Independent reference computations used by the tests.

None of these import the code under test; they work on plain integers and
fractions so that agreement is meaningful.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from statistics import fmean


def to_milli(x) -> int:
    """Exact thousandths of a decimal string, int or Decimal."""
    f = Fraction(str(x))
    m = f * 1000
    assert m.denominator == 1, f"{x} is not a milli amount"
    return int(m)


def round_half_even_div(n: int, d: int) -> int:
    q, r = divmod(n, d)
    if 2 * r > d or (2 * r == d and q % 2 == 1):
        q += 1
    return q


def pro_rata_milli(delivered_milli: int, price_milli: int) -> int:
    """delivered x price in milli-credits, half-even rounded."""
    return round_half_even_div(delivered_milli * price_milli, 1000)


def settlement(quantity, delivered, price) -> tuple[int, int]:
    """(payout, refund) in milli-credits for a contract settled at ``delivered``."""
    escrow = pro_rata_milli(to_milli(quantity), to_milli(price))
    payout = pro_rata_milli(to_milli(delivered), to_milli(price))
    return payout, escrow - payout


def reputation(scores, revocations) -> float:
    base = fmean(scores) if scores else 2.5
    return min(max(base - 0.5 * revocations, 0.0), 5.0)


def min_fill_cost(offers: list[tuple], need) -> tuple:
    """Minimum cost of buying min(need, supply) from divisible offers.

    Brute force over the vertices of the fill polytope: every subset of
    offers taken in full, plus at most one further offer taken partially.
    Works on ints or Fractions; returns (filled, cost).
    """
    supply = sum(q for q, _ in offers)
    fill = min(need, supply)
    best = None
    idx = range(len(offers))
    for r in range(len(offers) + 1):
        for full in combinations(idx, r):
            got = sum(offers[i][0] for i in full)
            if got > fill:
                continue
            cost = sum(offers[i][0] * offers[i][1] for i in full)
            rest = fill - got
            if rest == 0:
                best = cost if best is None else min(best, cost)
                continue
            for j in idx:
                if j not in full and offers[j][0] >= rest:
                    c = cost + rest * offers[j][1]
                    best = c if best is None else min(best, c)
    return fill, best if best is not None else 0


def dynamic_price(base, k, low, high, target, stock) -> Fraction:
    base, k, low, high = (Fraction(str(v)) for v in (base, k, low, high))
    target, stock = Fraction(str(target)), Fraction(str(stock))
    m = 1 + k * (target - stock) / target
    return base * min(max(m, low), high)
