"""Smallness exponents for the long-time approximation of radiation solutions.

All arithmetic is exact (``Fraction``).  The nonlinearity degree enters as
``m = 2(l - 1)``.  Order ``r = 2`` uses the dedicated second-order formula; the
general-order formula is used for ``r >= 3``.  The implicit constants in the
feasibility inequalities are set to 1, so they are indicators, not proofs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

__all__ = [
    "delta0_order2",
    "delta0_general",
    "s0",
    "Thresholds",
    "smallness_thresholds",
    "feasibility",
]


def delta0_order2(d: int, m: int) -> Fraction:
    d, m = Fraction(d), Fraction(m)
    first = d / 2 + 4 / (m * (m + 2))
    second = 1 / m + 3 * d / (2 * m) + 2 / (m * (m + 2)) + 8 / (m * m * (m + 2)) + 4 / m**3
    return max(first, second)


def delta0_general(d: int, m: int, r: int) -> Fraction:
    d, m, r = Fraction(d), Fraction(m), Fraction(r)
    den = m * m * (m + 2 * (r - 1))
    first = d * (1 - 1 / r) + 4 * r / den
    second = (r - 1) / m + 3 * d / (2 * m) + (2 * r * m + 8 * (r - 1) ** 2) / den + 4 * (r - 1) ** 2 / m**3
    return max(first, second)


def s0(d: int) -> Fraction:
    return Fraction(d) + Fraction(5, 2)


def feasibility(delta: float, c: float, T: Optional[float] = None, nu: float = 0.25, d: int = 2, r: int = 2) -> dict:
    """Evaluate the three contraction conditions and the Lipschitz bound,
    all with implied constants equal to 1.  ``T`` defaults to ``c^{2(r-1)}``."""
    T = c ** (2 * (r - 1)) if T is None else T
    t1 = (T + c * T**0.5) * c ** (-3 * delta) + T**nu * c ** (1 - 2 * delta)
    t2 = c ** (1 - delta) * T ** (1 / 3 - nu) + c ** (2 * (1 - delta)) * T ** (1 / (4 * d)) + c ** (2 - 3 * delta) * T ** (1 - nu)
    t3 = c ** (d * (1 - 1 / r) - 2 * delta) * T
    ct = T**nu * c ** (-2 * delta)
    out = {
        "term1": t1 <= 0.5,
        "term2": t2 <= 1.0,
        "term3": t3 <= 1.0,
        "contraction": ct <= 0.5,
        "values": {"term1": t1, "term2": t2, "term3": t3, "contraction": ct},
    }
    out["all"] = out["term1"] and out["term2"] and out["term3"] and out["contraction"]
    return out


@dataclass(frozen=True)
class Thresholds:
    d: int
    l: int
    r: int
    m: int
    delta0: Fraction
    ratio: Fraction
    alpha_star: Fraction
    s0: Fraction
    hypothesis_ok: bool
    formula: str
    notes: tuple

    def feasibility(self, delta: float, c: float, T: Optional[float] = None, nu: float = 0.25) -> dict:
        return feasibility(delta, c, T, nu, self.d, self.r)


def smallness_thresholds(d: int, l: int, r: int) -> Thresholds:
    """``delta0``, ``(r-1)/(l-1)`` and their max (the second exponent
    ``delta1`` has no closed form and is left to ``feasibility``)."""
    if d < 2 or l < 2 or r < 2:
        raise ValueError(f"need d >= 2, l >= 2, r >= 2; got d={d}, l={l}, r={r}")
    m = 2 * (l - 1)
    if r == 2:
        d0, formula = delta0_order2(d, m), "order2"
    else:
        d0, formula = delta0_general(d, m, r), "general"
    ratio = Fraction(r - 1, l - 1)
    hyp = Fraction(r) < Fraction(d * (l - 1), 2)
    notes = []
    if not hyp:
        notes.append(f"hypothesis r < d(l-1)/2 violated: {r} >= {Fraction(d * (l - 1), 2)}")
    if r == 2 and delta0_general(d, m, 2) != d0:
        notes.append(f"general formula at r=2 gives {delta0_general(d, m, 2)} instead of {d0}")
    return Thresholds(d, l, r, m, d0, ratio, max(d0, ratio), s0(d), hyp, formula, tuple(notes))
