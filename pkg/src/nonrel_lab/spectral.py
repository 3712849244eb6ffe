"""Periodic spectral grids, Fourier multipliers, dyadic and unit-cube
frequency decompositions, and the norms built on top of them.

Transforms use numpy's unnormalized forward FFT and ``1/N^d`` inverse.  Every
norm carries the cell measure ``(L/N)^d`` so it approximates the continuum
integral over the box ``[0, L)^d``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "SpectralGrid",
    "Representation",
    "ComplexField",
    "FourierMultiplier",
    "GridMismatchError",
    "make_grid",
    "transform",
    "apply_multiplier",
    "bracket_power",
    "japanese_bracket",
    "laplacian",
    "smooth_step",
    "bump",
    "lp_symbol",
    "lp_max_index",
    "lp_project",
    "cutoff",
    "eta_profile",
    "square_symbol",
    "square_indices",
    "square_project",
    "square_tilde_project",
    "l2_norm",
    "sobolev_norm",
    "lp_square_norm",
    "modulation_norm",
    "spacetime_norm",
    "random_field",
    "boundary_mass_fraction",
]


class GridMismatchError(ValueError):
    """Raised when two objects living on different grids are combined."""


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic lattice on ``[0, L)^d`` with ``N`` points per axis."""

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"period must be positive, got {self.L}")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    @cached_property
    def axis_points(self) -> np.ndarray:
        return np.arange(self.N) * self.dx

    @cached_property
    def xi(self) -> tuple:
        k = self.axis_wavenumbers
        return tuple(np.meshgrid(*([k] * self.d), indexing="ij"))

    @cached_property
    def x(self) -> tuple:
        p = self.axis_points
        return tuple(np.meshgrid(*([p] * self.d), indexing="ij"))

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.xi)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @property
    def xi_max(self) -> float:
        return float(self.xi_abs.max())

    @property
    def nyquist(self) -> float:
        return np.pi / self.dx

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Frequencies that hit the Nyquist index on any axis."""
        idx = np.fft.fftfreq(self.N) * self.N
        ny = idx == -self.N // 2
        masks = np.meshgrid(*([ny] * self.d), indexing="ij")
        out = np.zeros(self.shape, dtype=bool)
        for m in masks:
            out |= m
        return out


def make_grid(d: int, N: int, L: float = 2 * np.pi) -> SpectralGrid:
    return SpectralGrid(int(d), int(N), float(L))


class Representation(str, enum.Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


@dataclass
class ComplexField:
    """Complex samples on a grid, tagged with the representation they live in."""

    grid: SpectralGrid
    values: np.ndarray
    representation: Representation = Representation.PHYSICAL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            self.values = self.values.reshape(self.grid.shape)
        self.representation = Representation(self.representation)

    @property
    def is_spectral(self) -> bool:
        return self.representation is Representation.SPECTRAL

    def physical(self) -> np.ndarray:
        return np.fft.ifftn(self.values) if self.is_spectral else self.values

    def spectral(self) -> np.ndarray:
        return self.values if self.is_spectral else np.fft.fftn(self.values)

    def to_physical(self) -> "ComplexField":
        return ComplexField(self.grid, self.physical(), Representation.PHYSICAL)

    def to_spectral(self) -> "ComplexField":
        return ComplexField(self.grid, self.spectral(), Representation.SPECTRAL)

    def conj(self) -> "ComplexField":
        return ComplexField(self.grid, np.conj(self.physical()))

    def _check(self, other: "ComplexField"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} vs {other.grid}")

    def __add__(self, other: "ComplexField") -> "ComplexField":
        self._check(other)
        return ComplexField(self.grid, self.physical() + other.physical())

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        self._check(other)
        return ComplexField(self.grid, self.physical() - other.physical())

    def __mul__(self, scalar) -> "ComplexField":
        return ComplexField(self.grid, self.values * scalar, self.representation)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_function(cls, grid: SpectralGrid, fn: Callable) -> "ComplexField":
        return cls(grid, fn(*grid.x))


def transform(f: ComplexField, direction: str = "forward") -> ComplexField:
    """Switch representation; ``forward`` goes physical -> spectral."""
    if direction == "forward":
        return f.to_spectral()
    if direction == "inverse":
        return f.to_physical()
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class FourierMultiplier:
    """Diagonal operator ``f^(xi) -> m(xi) f^(xi)``.

    A radial symbol is called with ``|xi|``; a general one with the wavevector
    components.  ``table`` pins a multiplier to one grid (sampled symbols).
    """

    symbol: Optional[Callable] = None
    radial: bool = True
    name: str = ""
    table: Optional[np.ndarray] = dc_field(default=None, compare=False)
    grid: Optional[SpectralGrid] = None

    def on_grid(self, grid: SpectralGrid) -> np.ndarray:
        if self.table is not None:
            if grid != self.grid:
                raise GridMismatchError(f"multiplier {self.name!r} sampled on {self.grid}, field on {grid}")
            return self.table
        if self.radial:
            vals = self.symbol(grid.xi_abs)
        else:
            vals = self.symbol(*grid.xi)
        return np.broadcast_to(np.asarray(vals), grid.shape)

    def __matmul__(self, other: "FourierMultiplier") -> "FourierMultiplier":
        if self.table is not None or other.table is not None:
            g = self.grid if self.table is not None else other.grid
            return FourierMultiplier.from_table(g, self.on_grid(g) * other.on_grid(g), f"{self.name}*{other.name}")
        a, b = self, other
        if a.radial and b.radial:
            return FourierMultiplier(lambda R: a.symbol(R) * b.symbol(R), True, f"{a.name}*{b.name}")

        def sym(*xi):
            R = np.sqrt(sum(k**2 for k in xi))
            va = a.symbol(R) if a.radial else a.symbol(*xi)
            vb = b.symbol(R) if b.radial else b.symbol(*xi)
            return va * vb

        return FourierMultiplier(sym, False, f"{a.name}*{b.name}")

    def power(self, p: float) -> "FourierMultiplier":
        s = self.symbol
        return FourierMultiplier(lambda *x: s(*x) ** p, self.radial, f"({self.name})^{p}")

    @classmethod
    def from_table(cls, grid: SpectralGrid, table: np.ndarray, name: str = "table") -> "FourierMultiplier":
        return cls(None, False, name, np.asarray(table), grid)


def apply_multiplier(f: ComplexField, m: FourierMultiplier) -> ComplexField:
    return ComplexField(f.grid, m.on_grid(f.grid) * f.spectral(), Representation.SPECTRAL)


def japanese_bracket(c: float) -> FourierMultiplier:
    """Symbol of ``(c^2 - Laplacian)^{1/2}``."""
    return FourierMultiplier(lambda R: np.sqrt(c * c + R * R), True, f"<xi>_{c}")


def laplacian() -> FourierMultiplier:
    return FourierMultiplier(lambda R: -(R * R), True, "Delta")


def bracket_power(f: ComplexField, c: float, p: float, form: str = "ratio") -> ComplexField:
    """Apply a power of the relativistic bracket.

    ==========  =====================================
    ``form``    symbol
    ==========  =====================================
    ratio       ``(c / sqrt(c^2 + |xi|^2))^p``
    bracket     ``sqrt(c^2 + |xi|^2)^p``
    ==========  =====================================
    """
    if form == "ratio":
        table = (c / np.sqrt(c * c + f.grid.xi_sq)) ** p
    elif form == "bracket":
        table = (c * c + f.grid.xi_sq) ** (p / 2)
    else:
        raise ValueError(f"unknown form {form!r}")
    return ComplexField(f.grid, table * f.spectral(), Representation.SPECTRAL)


# ---------------------------------------------------------------------------
# smooth profiles


def _exp_tail(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    out[pos] = np.exp(-1.0 / y[pos])
    return out


def smooth_step(y):
    """C-infinity step: 0 for ``y <= 0``, 1 for ``y >= 1``, and
    ``smooth_step(y) + smooth_step(1 - y) == 1``."""
    a = _exp_tail(y)
    b = _exp_tail(1.0 - np.asarray(y, dtype=float))
    return a / (a + b)


def bump(R):
    """Radial cutoff equal to 1 on ``|xi| <= 1/2`` and 0 on ``|xi| >= 1``."""
    return smooth_step(2.0 * (1.0 - np.asarray(R, dtype=float)))


def lp_symbol(j: int, R) -> np.ndarray:
    if j < 0:
        raise ValueError("Littlewood-Paley index must be >= 0")
    if j == 0:
        return bump(R)
    return bump(R / 2.0**j) - bump(R / 2.0 ** (j - 1))


def lp_max_index(grid: SpectralGrid) -> int:
    """Smallest ``J`` with ``sum_{j<=J} phi_j == 1`` at every grid frequency."""
    return max(0, math.ceil(math.log2(2 * grid.xi_max))) if grid.xi_max > 0 else 0


def lp_project(f: ComplexField, j: int) -> ComplexField:
    return ComplexField(f.grid, lp_symbol(j, f.grid.xi_abs) * f.spectral(), Representation.SPECTRAL)


def cutoff(f: ComplexField, n: int) -> ComplexField:
    """Low-pass ``sum_{j<=n} phi_j(D)``, which telescopes to ``phi_0(D / 2^n)``."""
    return ComplexField(f.grid, bump(f.grid.xi_abs / 2.0**n) * f.spectral(), Representation.SPECTRAL)


def eta_profile(x):
    """Unit-cube window supported in ``[-2/3, 2/3]`` whose integer translates sum to 1."""
    return smooth_step(2.0 - 3.0 * np.abs(np.asarray(x, dtype=float)))


def square_symbol(grid: SpectralGrid, k: Sequence[int]) -> np.ndarray:
    k = tuple(k)
    if len(k) != grid.d:
        raise ValueError(f"multi-index {k} does not match dimension {grid.d}")
    out = np.ones(grid.shape)
    for xi_i, k_i in zip(grid.xi, k):
        out = out * eta_profile(xi_i - k_i)
    return out


def _axis_blocks(grid: SpectralGrid):
    kaxis = grid.axis_wavenumbers
    ks = np.arange(math.floor(kaxis.min()) - 1, math.ceil(kaxis.max()) + 2)
    E = eta_profile(kaxis[None, :] - ks[:, None])
    keep = E.any(axis=1)
    return ks[keep], E[keep]


def square_indices(grid: SpectralGrid) -> list:
    """All multi-indices whose window meets at least one grid frequency."""
    ks, _ = _axis_blocks(grid)
    mesh = np.meshgrid(*([ks] * grid.d), indexing="ij")
    return [tuple(int(v) for v in row) for row in np.stack([m.ravel() for m in mesh], axis=1)]


def square_project(f: ComplexField, k: Sequence[int]) -> ComplexField:
    return ComplexField(f.grid, square_symbol(f.grid, k) * f.spectral(), Representation.SPECTRAL)


def square_tilde_project(f: ComplexField, k: Sequence[int]) -> ComplexField:
    """Sum of the ``3^d`` unit-cube blocks adjacent to ``k``."""
    k = np.asarray(k)
    sym = np.zeros(f.grid.shape)
    for off in np.ndindex(*([3] * f.grid.d)):
        sym += square_symbol(f.grid, k + np.asarray(off) - 1)
    return ComplexField(f.grid, sym * f.spectral(), Representation.SPECTRAL)


# ---------------------------------------------------------------------------
# norms


def _spectral_energy(f: ComplexField) -> np.ndarray:
    g = f.grid
    return np.abs(f.spectral()) ** 2 * (g.cell / g.size)


def l2_norm(f: ComplexField) -> float:
    return math.sqrt(float(_spectral_energy(f).sum()))


def sobolev_norm(f: ComplexField, k: float) -> float:
    if k < 0:
        raise ValueError("Sobolev index must be >= 0")
    w = (1.0 + f.grid.xi_sq) ** k
    return math.sqrt(float((w * _spectral_energy(f)).sum()))


def lp_square_norm(f: ComplexField, k: float = 0.0) -> float:
    """L^2 norm of the weighted square function ``(sum_j 4^{jk} |phi_j(D) f|^2)^{1/2}``."""
    e = _spectral_energy(f)
    R = f.grid.xi_abs
    total = 0.0
    for j in range(lp_max_index(f.grid) + 1):
        total += 4.0 ** (j * k) * float((lp_symbol(j, R) ** 2 * e).sum())
    return math.sqrt(total)


def _block_energies(f: ComplexField):
    ks, E = _axis_blocks(f.grid)
    e = _spectral_energy(f)
    E2 = E**2
    for _ in range(f.grid.d):
        # contract the leading frequency axis, append the block axis at the end
        e = np.tensordot(e, E2, axes=([0], [1]))
    return ks, e


def modulation_norm(f: ComplexField, s: float = 0.0) -> float:
    """``sum_k <k>^s ||box_k f||_{L^2}`` over the unit-cube decomposition."""
    ks, e = _block_energies(f)
    mesh = np.meshgrid(*([ks.astype(float)] * f.grid.d), indexing="ij")
    kk = sum(m**2 for m in mesh)
    return float(((1.0 + kk) ** (s / 2) * np.sqrt(np.maximum(e, 0.0))).sum())


def _lebesgue(vals: np.ndarray, q: float, weight: float) -> float:
    a = np.abs(vals)
    if math.isinf(q):
        return float(a.max())
    return float((weight * (a**q).sum()) ** (1.0 / q))


def spacetime_norm(traj: Iterable, p: float, q: float, k: float = 0.0) -> float:
    """Mixed ``L^p_t W^{k,q}_x`` norm of sampled ``(t, field)`` pairs.

    Space: Bessel potential ``(1+|xi|^2)^{k/2}`` then a Riemann sum.  Time:
    composite trapezoid.  A single snapshot carries unit time weight, so the
    result is just its spatial norm.
    """
    samples = list(traj)
    if not samples:
        raise ValueError("empty trajectory")
    times = np.array([t for t, _ in samples], dtype=float)
    if len(times) > 2:
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(steps.mean())):
            raise ValueError("trajectory must be time-ordered with uniform steps")
    norms = []
    for _, f in samples:
        g = f.grid
        if k:
            vals = np.fft.ifftn((1.0 + g.xi_sq) ** (k / 2) * f.spectral())
        else:
            vals = f.physical()
        norms.append(_lebesgue(vals, q, g.cell))
    norms = np.asarray(norms)
    if math.isinf(p):
        return float(norms.max())
    if len(norms) == 1:
        return float(norms[0])
    return float(np.trapezoid(norms**p, times) ** (1.0 / p))


# ---------------------------------------------------------------------------
# data helpers


def random_field(
    grid: SpectralGrid,
    seed: int,
    band: Optional[int] = None,
    localize: bool = True,
    norm_k: Optional[float] = None,
    amplitude: float = 1.0,
) -> ComplexField:
    """Seeded random field with spectral support ``|n| <= band`` (integer index).

    With ``localize`` the random modes live on ``|n| <= band/8`` and are
    modulated by a centred Gaussian of width ``L/10`` before the final band
    projection, so the mass stays away from the box edge.  ``norm_k`` rescales
    to ``amplitude`` in ``H^{norm_k}``; otherwise the sup norm is used.
    """
    rng = np.random.default_rng(seed)
    band = grid.N // 8 if band is None else band
    n_abs = grid.xi_abs * grid.L / (2 * np.pi)
    inner = max(1, band // 8) if localize else band
    coef = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * (n_abs <= inner)
    psi = np.fft.ifftn(coef)
    if localize:
        c = grid.L / 2
        sigma = grid.L / 10
        env = np.exp(-sum((x - c) ** 2 for x in grid.x) / (2 * sigma**2))
        psi = np.fft.ifftn(np.fft.fftn(psi * env) * (n_abs <= band))
    f = ComplexField(grid, psi)
    scale = sobolev_norm(f, norm_k) if norm_k is not None else float(np.abs(psi).max())
    return f * (amplitude / scale)


def boundary_mass_fraction(f: ComplexField, layer: float = 1 / 16) -> float:
    """Share of ``||f||^2`` within ``layer * L`` of the box faces."""
    g = f.grid
    w = g.L * layer
    near = np.zeros(g.shape, dtype=bool)
    for x in g.x:
        near |= (x < w) | (x > g.L - w)
    dens = np.abs(f.physical()) ** 2
    total = dens.sum()
    return float(dens[near].sum() / total) if total > 0 else 0.0
