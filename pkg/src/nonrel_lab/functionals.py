"""Numeric Hamiltonian functionals on spectral fields, their Wirtinger
gradients, a quadrature Poisson bracket and a finite-difference gradient check.

Every gradient is ``dF/dpsibar`` as a pointwise density, so the flow of ``F``
is ``psi_t = i * grad``.  For a real functional ``dF/dpsi = conj(dF/dpsibar)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .formal import FormalHamiltonian, build_F1, derive_order2, homological_solve
from .spectral import ComplexField, SpectralGrid

__all__ = [
    "FUNCTIONAL_NAMES",
    "NamedFunctional",
    "MissingGradientError",
    "named_functional",
    "functional_from_formal",
    "order2_coefficient",
    "laplacian_array",
    "numeric_bracket",
    "gauge_average",
    "gradient_check",
]

FUNCTIONAL_NAMES = ("h0", "h1", "h2", "F1", "F1avg", "chi1", "F2", "F2avg", "Z2")


class MissingGradientError(ValueError):
    pass


def laplacian_array(a: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.ifftn(-grid.xi_sq * np.fft.fftn(a))


def bilaplacian_array(a: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.ifftn(grid.xi_sq**2 * np.fft.fftn(a))


@dataclass(frozen=True)
class NamedFunctional:
    """A functional ``psi -> F(psi)`` with its ``d/dpsibar`` density.

    ``density_fn`` and ``grad_fn`` take a physical-space array and the grid.
    ``real`` marks real observables so their values are returned as floats.
    """

    name: str
    density_fn: Callable
    grad_fn: Optional[Callable]
    params: dict = dc_field(default_factory=dict)
    real: bool = True
    grad_psi_fn: Optional[Callable] = None

    def value_array(self, psi: np.ndarray, grid: SpectralGrid) -> complex:
        return complex(np.sum(self.density_fn(psi, grid)) * grid.cell)

    def __call__(self, f: ComplexField):
        v = self.value_array(f.physical(), f.grid)
        if self.real:
            return v.real
        return v

    def grad_bar_array(self, psi: np.ndarray, grid: SpectralGrid) -> np.ndarray:
        if self.grad_fn is None:
            raise MissingGradientError(f"functional {self.name!r} has no gradient")
        return self.grad_fn(psi, grid)

    def grad_psi_array(self, psi: np.ndarray, grid: SpectralGrid) -> np.ndarray:
        if self.grad_psi_fn is not None:
            return self.grad_psi_fn(psi, grid)
        if not self.real:
            raise MissingGradientError(f"functional {self.name!r} needs an explicit d/dpsi")
        return np.conj(self.grad_bar_array(psi, grid))

    def gradient(self, f: ComplexField) -> ComplexField:
        return ComplexField(f.grid, self.grad_bar_array(f.physical(), f.grid))

    def vector_field(self, f: ComplexField) -> ComplexField:
        """``X_F = i dF/dpsibar``."""
        return ComplexField(f.grid, 1j * self.grad_bar_array(f.physical(), f.grid))


def functional_from_formal(H: FormalHamiltonian, name: str = "formal", real: Optional[bool] = None) -> NamedFunctional:
    from .formal import real_observable

    return NamedFunctional(
        name,
        lambda psi, g: H.density(psi),
        lambda psi, g: H.grad_bar(psi),
        {"terms": len(H)},
        real_observable(H) if real is None else real,
        lambda psi, g: H.grad(psi),
    )


def order2_coefficient(l: int) -> Fraction:
    """Adopted coefficient ``kappa`` (per ``lam^2``) of ``int |psi|^{2(2l-1)}``."""
    return derive_order2(l, 1).adopted_coefficient


def named_functional(name: str, c: float = 1.0, lam: float = 1.0, l: int = 2, kappa: Optional[float] = None) -> NamedFunctional:
    """Build one of ``FUNCTIONAL_NAMES`` at parameters ``(c, lam, l)``.

    ``Z2`` is the normalized Hamiltonian without ``h0``:
    ``h1 + <F1> + c^{-2} (h2 + <F2> + kappa lam^2 int |psi|^{2(2l-1)})``.
    ``kappa`` defaults to the adopted formal value.
    """
    if name not in FUNCTIONAL_NAMES:
        raise ValueError(f"unknown functional {name!r}; choose from {FUNCTIONAL_NAMES}")
    if l < 2:
        raise ValueError("power index l must be >= 2")
    params = {"c": c, "lam": lam, "l": l}
    b2l = math.comb(2 * l, l)
    a_avg = lam * b2l / (2 ** (l + 1) * l)
    a2 = lam / 2 ** (l + 2) * math.comb(2 * l - 1, l)

    if name == "h0":
        return NamedFunctional(name, lambda p, g: np.abs(p) ** 2, lambda p, g: p, params)
    if name == "h1":
        return NamedFunctional(
            name,
            lambda p, g: -0.5 * np.conj(p) * laplacian_array(p, g),
            lambda p, g: -0.5 * laplacian_array(p, g),
            params,
        )
    if name == "h2":
        return NamedFunctional(
            name,
            lambda p, g: -0.125 * np.conj(p) * bilaplacian_array(p, g),
            lambda p, g: -0.125 * bilaplacian_array(p, g),
            params,
        )
    if name == "F1":
        pref = lam / (2 ** (l + 1) * l)
        return NamedFunctional(
            name,
            lambda p, g: pref * (2 * p.real) ** (2 * l),
            lambda p, g: (lam / 2**l) * (2 * p.real) ** (2 * l - 1) + 0j,
            params,
        )
    if name == "F1avg":
        return NamedFunctional(
            name,
            lambda p, g: a_avg * np.abs(p) ** (2 * l),
            lambda p, g: a_avg * l * np.abs(p) ** (2 * (l - 1)) * p,
            params,
        )
    if name == "chi1":
        from fractions import Fraction as _F

        H = homological_solve(build_F1(l, _F(lam).limit_denominator(10**12)))
        f = functional_from_formal(H, "chi1", real=True)
        return NamedFunctional("chi1", f.density_fn, f.grad_fn, params, True, f.grad_psi_fn)
    if name == "F2":
        pref = lam / 2 ** (l + 2)

        def dens(p, g):
            u = 2 * p.real
            return pref * u ** (2 * l - 1) * laplacian_array(u, g)

        def grad(p, g):
            u = 2 * p.real
            return pref * ((2 * l - 1) * u ** (2 * l - 2) * laplacian_array(u, g) + laplacian_array(u ** (2 * l - 1), g))

        return NamedFunctional(name, dens, grad, params)
    if name == "F2avg":
        return NamedFunctional(name, lambda p, g: _f2avg_density(p, g, l, a2), lambda p, g: _f2avg_grad(p, g, l, a2), params)

    # Z2
    eps = 1.0 / (c * c)
    kap = float(order2_coefficient(l)) if kappa is None else kappa
    params = dict(params, kappa=kap)
    q = 2 * l - 1

    def dens(p, g):
        m = np.abs(p) ** 2
        return (
            -0.5 * np.conj(p) * laplacian_array(p, g)
            + a_avg * m**l
            + eps
            * (
                -0.125 * np.conj(p) * bilaplacian_array(p, g)
                + _f2avg_density(p, g, l, a2)
                + kap * lam * lam * m**q
            )
        )

    def grad(p, g):
        m = np.abs(p) ** 2
        return (
            -0.5 * laplacian_array(p, g)
            + a_avg * l * m ** (l - 1) * p
            + eps
            * (
                -0.125 * bilaplacian_array(p, g)
                + _f2avg_grad(p, g, l, a2)
                + kap * lam * lam * q * m ** (q - 1) * p
            )
        )

    return NamedFunctional(name, dens, grad, params)


def _f2avg_density(p, g, l, a2):
    rho = np.abs(p) ** (2 * (l - 1))
    lp = laplacian_array(p, g)
    return a2 * rho * 2 * (np.conj(p) * lp).real


def _f2avg_grad(p, g, l, a2):
    m = np.abs(p) ** 2
    rho = m ** (l - 1)
    lp = laplacian_array(p, g)
    out = l * rho * lp + laplacian_array(rho * p, g)
    if l >= 2:
        out = out + (l - 1) * m ** (l - 2) * p**2 * np.conj(lp)
    return a2 * out


def numeric_bracket(F: NamedFunctional, G: NamedFunctional, f: ComplexField):
    """``{F, G}(psi) = -i int (F_psi G_psibar - F_psibar G_psi) dx``.

    Same convention as the formal engine, so the two agree monomial by
    monomial.  Returns a float when both functionals are real.
    """
    if F.grad_fn is None or G.grad_fn is None:
        raise MissingGradientError("both functionals need gradients")
    p, g = f.physical(), f.grid
    fb, gb = F.grad_bar_array(p, g), G.grad_bar_array(p, g)
    fp, gp = F.grad_psi_array(p, g), G.grad_psi_array(p, g)
    val = -1j * np.sum(fp * gb - fb * gp) * g.cell
    if F.real and G.real:
        return float(val.real)
    return complex(val)


def gauge_average(fn: Callable[[ComplexField], float], f: ComplexField, nodes: int = 64) -> float:
    """``(1/2pi) int_0^{2pi} fn(e^{it} psi) dt`` by the equispaced rule.

    Exact for trigonometric polynomials in ``t`` of degree below ``nodes``.
    """
    ts = 2 * np.pi * np.arange(nodes) / nodes
    vals = [fn(f * np.exp(1j * t)) for t in ts]
    return float(np.mean(vals)) if all(np.isrealobj(v) for v in vals) else complex(np.mean(vals))


def gradient_check(
    F: NamedFunctional,
    f: ComplexField,
    n_dirs: int = 10,
    step: float = 1e-6,
    seed: int = 0,
) -> float:
    """Max relative error between central differences and ``2 Re <delta, grad>``.

    Directions are seeded, band-limited to the inner quarter of the spectrum
    and scaled to the sup norm of ``psi``.
    """
    if F.grad_fn is None:
        raise MissingGradientError(f"functional {F.name!r} has no gradient")
    g = f.grid
    p = f.physical()
    rng = np.random.default_rng(seed)
    band = g.xi_abs <= 0.25 * g.nyquist
    scale = max(float(np.abs(p).max()), 1e-300)
    gb = F.grad_bar_array(p, g)
    gp = F.grad_psi_array(p, g)
    worst = 0.0
    for _ in range(n_dirs):
        coef = (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)) * band
        dlt = np.fft.ifftn(coef)
        dlt *= scale / np.abs(dlt).max()
        fd = (F.value_array(p + step * dlt, g) - F.value_array(p - step * dlt, g)) / (2 * step)
        an = np.sum(gp * dlt + gb * np.conj(dlt)) * g.cell
        err = abs(fd - an) / max(abs(an), 1e-300)
        worst = max(worst, err)
    return worst
