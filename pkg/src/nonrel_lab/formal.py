"""Exact calculus on gauge-periodic polynomial Hamiltonians.

A ``FormalHamiltonian`` stands for ``sum q_ab * int psi^a conj(psi)^b dx`` with
Gaussian-rational coefficients.  For this zero-derivative class the Poisson
bracket closes, which lets the first normal-form step and the averaged
second-order coefficient be computed without rounding.

Bracket convention: for functionals of ``(psi, conj psi)``::

    {A, B} = -i * int (dA/dpsi * dB/dpsibar - dA/dpsibar * dB/dpsi) dx

so ``{m_ab, h0} = -i (a - b) m_ab``.  Along the flow ``psi_t = i dH/dpsibar``
an observable evolves by ``dF/dt = {H, F}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

__all__ = [
    "GaussianRational",
    "FormalHamiltonian",
    "BRACKET_SIGN",
    "monomial",
    "h0_formal",
    "build_F1",
    "poisson_formal",
    "gauge_average_formal",
    "homological_solve",
    "homological_residual",
    "real_observable",
    "pin_bracket_sign",
    "printed_chi1_coefficient",
    "printed_K",
    "derive_order2",
    "Order2Report",
    "dispersion_coefficients",
    "dispersion_symbol",
]


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"exact rational required, got {type(x).__name__}")


@dataclass(frozen=True)
class GaussianRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", _frac(self.re))
        object.__setattr__(self, "im", _frac(self.im))

    @classmethod
    def of(cls, x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        return cls(_frac(x), Fraction(0))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __add__(self, o):
        o = GaussianRational.of(o)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussianRational.of(o))

    def __rsub__(self, o):
        return GaussianRational.of(o) - self

    def __mul__(self, o):
        o = GaussianRational.of(o)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = GaussianRational.of(o)
        n = o.re * o.re + o.im * o.im
        if n == 0:
            raise ZeroDivisionError("Gaussian rational division by zero")
        return self * GaussianRational(o.re / n, -o.im / n)

    def __eq__(self, o):
        try:
            o = GaussianRational.of(o)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __str__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return f"{self.im}i"
        sign = "+" if self.im > 0 else "-"
        return f"{self.re}{sign}{abs(self.im)}i"

    __repr__ = __str__


I = GaussianRational(0, 1)
Degree = Tuple[int, int]


class FormalHamiltonian(Mapping):
    """Immutable map ``(a, b) -> q_ab`` with zero coefficients dropped."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping | None = None):
        clean: Dict[Degree, GaussianRational] = {}
        for (a, b), q in (terms or {}).items():
            if a < 0 or b < 0:
                raise ValueError(f"negative degree {(a, b)}")
            q = GaussianRational.of(q)
            if q:
                clean[(int(a), int(b))] = q
        self._terms = clean

    def __getitem__(self, key: Degree) -> GaussianRational:
        return self._terms[key]

    def coefficient(self, a: int, b: int) -> GaussianRational:
        return self._terms.get((a, b), GaussianRational())

    def __iter__(self) -> Iterator[Degree]:
        return iter(sorted(self._terms))

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, FormalHamiltonian):
            return self._terms == other._terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __add__(self, other: "FormalHamiltonian") -> "FormalHamiltonian":
        out = dict(self._terms)
        for k, q in other._terms.items():
            out[k] = out.get(k, GaussianRational()) + q
        return FormalHamiltonian(out)

    def __neg__(self):
        return FormalHamiltonian({k: -q for k, q in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s) -> "FormalHamiltonian":
        s = GaussianRational.of(s)
        return FormalHamiltonian({k: q * s for k, q in self._terms.items()})

    def __repr__(self):
        body = ", ".join(f"{k}: {q}" for k, q in sorted(self._terms.items()))
        return f"FormalHamiltonian({{{body}}})"

    # numeric realizations -------------------------------------------------

    def density(self, psi: np.ndarray) -> np.ndarray:
        pb = np.conj(psi)
        out = np.zeros_like(psi, dtype=complex)
        for (a, b), q in self._terms.items():
            out = out + complex(q) * psi**a * pb**b
        return out

    def evaluate(self, psi: np.ndarray, cell: float) -> complex:
        return complex(self.density(psi).sum() * cell)

    def grad_bar(self, psi: np.ndarray) -> np.ndarray:
        """Pointwise ``d(density)/d psibar``."""
        pb = np.conj(psi)
        out = np.zeros_like(psi, dtype=complex)
        for (a, b), q in self._terms.items():
            if b:
                out = out + complex(q) * b * psi**a * pb ** (b - 1)
        return out

    def grad(self, psi: np.ndarray) -> np.ndarray:
        """Pointwise ``d(density)/d psi``."""
        pb = np.conj(psi)
        out = np.zeros_like(psi, dtype=complex)
        for (a, b), q in self._terms.items():
            if a:
                out = out + complex(q) * a * psi ** (a - 1) * pb**b
        return out


def monomial(a: int, b: int, q=1) -> FormalHamiltonian:
    return FormalHamiltonian({(a, b): q})


def h0_formal() -> FormalHamiltonian:
    return monomial(1, 1)


def build_F1(l: int, lam=1) -> FormalHamiltonian:
    """``lam / (2^{l+1} l) * int (psi + psibar)^{2l}`` expanded binomially."""
    if l < 2:
        raise ValueError(f"power index l must be >= 2, got {l}")
    pref = _frac(lam) / (2 ** (l + 1) * l)
    return FormalHamiltonian({(2 * l - j, j): pref * math.comb(2 * l, j) for j in range(2 * l + 1)})


# The sign s in {m_ab, m_cd} = s * i (ad - bc) q q'.  Fixed by pin_bracket_sign.
BRACKET_SIGN = -1


def poisson_formal(A: FormalHamiltonian, B: FormalHamiltonian, sign: int = None) -> FormalHamiltonian:
    s = BRACKET_SIGN if sign is None else sign
    out: Dict[Degree, GaussianRational] = {}
    for (a, b), qa in A.items():
        for (c, d), qb in B.items():
            w = a * d - b * c
            if not w:
                continue
            key = (a + c - 1, b + d - 1)
            out[key] = out.get(key, GaussianRational()) + I * (s * w) * qa * qb
    return FormalHamiltonian(out)


def gauge_average_formal(A: FormalHamiltonian) -> FormalHamiltonian:
    return FormalHamiltonian({k: q for k, q in A.items() if k[0] == k[1]})


def homological_solve(F: FormalHamiltonian, sign: int = None) -> FormalHamiltonian:
    """Generator ``chi`` with ``{chi, h0} + F = <F>`` and no resonant terms."""
    s = BRACKET_SIGN if sign is None else sign
    # {m_ab, h0} = s*i*(a-b) m_ab, so chi_ab = -F_ab / (s*i*(a-b))
    return FormalHamiltonian(
        {(a, b): -q / (I * (s * (a - b))) for (a, b), q in F.items() if a != b}
    )


def homological_residual(chi: FormalHamiltonian, F: FormalHamiltonian, sign: int = None) -> FormalHamiltonian:
    return poisson_formal(chi, h0_formal(), sign) + F - gauge_average_formal(F)


def real_observable(A: FormalHamiltonian) -> bool:
    return all(A.coefficient(b, a) == q.conjugate() for (a, b), q in A.items())


def printed_chi1_coefficient(l: int, j: int, lam=1) -> GaussianRational:
    """Closed-form coefficient of ``psi^{2l-j} psibar^j`` in the first generator."""
    if j == l:
        return GaussianRational()
    pref = _frac(lam) / (2 ** (l + 1) * l) * math.comb(2 * l, j)
    return GaussianRational.of(pref) / (I * (2 * (l - j)))


def pin_bracket_sign(l_values=(2, 3, 4, 5)) -> int:
    """The sign for which the closed-form generator solves the homological equation."""
    good = []
    for s in (+1, -1):
        ok = True
        for l in l_values:
            F = build_F1(l)
            chi = FormalHamiltonian({(2 * l - j, j): printed_chi1_coefficient(l, j) for j in range(2 * l + 1)})
            if len(homological_residual(chi, F, s)):
                ok = False
                break
        if ok:
            good.append(s)
    if len(good) != 1:
        raise RuntimeError(f"bracket sign not uniquely determined: {good}")
    return good[0]


def printed_K(l: int) -> Fraction:
    """Literal evaluation of the printed closed form for the averaged
    ``{chi_1, F_1}`` coefficient (divided by ``lam^2``)."""
    total = Fraction(0)
    for j in range(1, 2 * l):
        h = 2 * l - j
        if j == l or not 1 <= h <= 2 * l - 1:
            continue
        total += Fraction(math.comb(2 * l, j) * math.comb(2 * l, h) * ((2 * l - j) * h - j * (2 * l - h)), l - j)
    return (total + 16 * l) / (2 ** (2 * l + 3) * l * l)


def _fmt(q) -> str:
    q = GaussianRational.of(q)
    return f"{q}  (~{complex(q).real:.12g}{'' if not q.im else f' + {float(q.im):.12g}i'})"


@dataclass(frozen=True)
class Order2Report:
    l: int
    lam: Fraction
    chi1: FormalHamiltonian
    avg_F1: FormalHamiltonian
    raw_avg_bracket: GaussianRational
    avg_bracket_with_avg: GaussianRational
    combined: GaussianRational
    printed_K: Fraction
    adopted: str
    lines: tuple

    @property
    def adopted_coefficient(self) -> Fraction:
        """Coefficient of ``lam^2 int |psi|^{2(2l-1)}`` fed to the dynamics."""
        v = self.combined if self.adopted == "combined" else self.raw_avg_bracket
        return v.re / self.lam**2 if self.lam else v.re

    @property
    def flags(self) -> dict:
        return {ln.split(":")[0]: ln for ln in self.lines if ln.startswith(("PASS", "FLAG"))}

    def text(self) -> str:
        return "\n".join(self.lines)


def derive_order2(l: int, lam=1) -> Order2Report:
    """Second normal-form step on the zero-derivative class.

    Computes ``<{chi1, F1}>``, ``<{chi1, <F1>}>`` and the combined average that
    also carries ``1/2 {chi1, <F1> - F1}``, then compares the combined value
    against the printed closed form and the end-to-end quintic coefficient of
    the cubic case.
    """
    if l < 2:
        raise ValueError(f"power index l must be >= 2, got {l}")
    lam = _frac(lam)
    F1 = build_F1(l, lam)
    avg = gauge_average_formal(F1)
    chi = homological_solve(F1)
    deg = (2 * l - 1, 2 * l - 1)
    raw = gauge_average_formal(poisson_formal(chi, F1)).coefficient(*deg)
    with_avg = gauge_average_formal(poisson_formal(chi, avg)).coefficient(*deg)
    half = gauge_average_formal(poisson_formal(chi, avg - F1)).coefficient(*deg)
    combined = raw + half * Fraction(1, 2)
    pk = printed_K(l)
    l2 = lam * lam if lam else Fraction(1)

    lines = [
        f"order-2 derivation, l={l}, lambda={lam}",
        f"chi1 terms: {len(chi)}; residual terms: {len(homological_residual(chi, F1))}",
        f"<F1> coefficient at ({l},{l}): {_fmt(avg.coefficient(l, l))}",
        f"<{{chi1,F1}}> / lambda^2: {_fmt(raw / l2)}",
        f"<{{chi1,<F1>}}> / lambda^2: {_fmt(with_avg / l2)}",
        f"combined <{{chi1,F1}} + 1/2{{chi1,<F1>-F1}}> / lambda^2: {_fmt(combined / l2)}",
        f"printed K({l}): {_fmt(pk)}",
    ]
    lines.append(
        ("PASS" if with_avg == 0 else "FLAG") + f": average of {{chi1,<F1>}} vanishes ({with_avg})"
    )
    cand = {"raw": raw / l2, "combined": combined / l2}
    for name, v in cand.items():
        tag = "PASS" if v == pk else "FLAG"
        lines.append(f"{tag}: {name} vs printed K({l}): {v} vs {pk}")
    if l == 2:
        target = Fraction(51, 8) / (2 * l - 1)
        for name, v in cand.items():
            tag = "PASS" if v == target else "FLAG"
            lines.append(f"{tag}: {name} vs quintic coefficient 51/8 / (2l-1) = {target}: {v}")
        vf = {n: v * (2 * l - 1) for n, v in cand.items()}
        lines.append(
            "vector-field |psi|^4 psi coefficient / lambda^2: "
            + ", ".join(f"{n}={v}" for n, v in vf.items())
            + ", printed=51/8"
        )
    lines.append(
        "adopted: combined (the full second-order term of H o T, checked against the "
        "quartic-oscillator normal form and the homogeneous-field NLKG flow)"
    )
    return Order2Report(l, lam, chi, avg, raw, with_avg, combined, pk, "combined", tuple(lines))


def dispersion_coefficients(r: int) -> list:
    """``a_1..a_r`` with ``c sqrt(c^2 + |xi|^2) - c^2 = sum_j a_j (-|xi|^2)^j eps^{j-1}``.

    From ``sqrt(1 + x) = sum binom(1/2, j) x^j`` one gets
    ``a_j = (-1)^j binom(1/2, j)``.
    """
    if r < 1:
        raise ValueError("order r must be >= 1")
    out = []
    b = Fraction(1)
    for j in range(1, r + 1):
        b = b * (Fraction(1, 2) - (j - 1)) / j
        out.append((-1) ** j * b)
    return out


def dispersion_symbol(r: int, xi_sq, c: float):
    """Truncated symbol ``sum_{j<=r} a_j (-|xi|^2)^j c^{-2(j-1)}``."""
    xi_sq = np.asarray(xi_sq, dtype=float)
    eps = 1.0 / (c * c)
    out = np.zeros_like(xi_sq)
    for j, a in enumerate(dispersion_coefficients(r), start=1):
        out = out + float(a) * (-xi_sq) ** j * eps ** (j - 1)
    return out
