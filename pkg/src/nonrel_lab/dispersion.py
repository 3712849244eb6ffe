"""Dispersion polynomial analysis, frequency bands, kernel time-decay fits and
Strichartz probes for the normalized linear flows.

The model phase is ``P_r(R) = sum_{j<=r} (-1)^{j+1} eps^{j-1} R^{2j}``.  Banded
kernels are radial, so they are evaluated by a one-dimensional Hankel-type
quadrature instead of a d-dimensional FFT (the high band sits far above any
desk grid's Nyquist frequency).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .formal import dispersion_coefficients
from .spectral import ComplexField, Representation, SpectralGrid, bump, spacetime_norm

__all__ = [
    "p_r_eval",
    "p_r_derivative",
    "p_r_second_derivative",
    "root_bounds",
    "CriticalRadii",
    "critical_radii",
    "threshold_K",
    "band_symbols",
    "band_project",
    "BandSplit",
    "DecayFit",
    "radial_kernel",
    "kernel_sup",
    "default_times",
    "kernel_decay_fit",
    "AdmissibilityResult",
    "admissible_check",
    "strichartz_probe",
    "StrichartzTable",
]


def _check_eps(eps):
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


def p_r_eval(r: int, eps: float, R: float) -> float:
    if r < 1:
        raise ValueError("r must be >= 1")
    return math.fsum((-1) ** (j + 1) * eps ** (j - 1) * R ** (2 * j) for j in range(1, r + 1))


def p_r_derivative(r: int, eps: float, R: float) -> float:
    if r < 1:
        raise ValueError("r must be >= 1")
    return math.fsum((-1) ** (j + 1) * eps ** (j - 1) * 2 * j * R ** (2 * j - 1) for j in range(1, r + 1))


def p_r_second_derivative(r: int, eps: float, R: float) -> float:
    return math.fsum(
        (-1) ** (j + 1) * eps ** (j - 1) * 2 * j * (2 * j - 1) * R ** (2 * j - 2) for j in range(1, r + 1)
    )


def _phase(r: int, eps: float, R: np.ndarray, true_symbol: bool = False) -> np.ndarray:
    """Vectorized ``P_r``; with ``true_symbol`` the Taylor weights ``-a_j`` are used,
    i.e. the rotating-frame symbol of the normalized equation."""
    R2 = np.asarray(R, dtype=float) ** 2
    out = np.zeros_like(R2)
    if true_symbol:
        for j, a in enumerate(dispersion_coefficients(r), start=1):
            out = out + float(a) * (-R2) ** j * eps ** (j - 1)
        return out
    for j in range(1, r + 1):
        out = out + (-1) ** (j + 1) * eps ** (j - 1) * R2**j
    return out


def root_bounds(r: int, eps: float):
    """Bracket for the nonzero critical radii.

    Lower: ``2 / max(2, sum 2j eps^{j-1})``.  Upper: Fujiwara's bound applied to
    ``Q(y) = P_r'(R) / R`` in ``y = R^2``, then ``R = sqrt(y)``.
    """
    lower = 2.0 / max(2.0, math.fsum(2 * j * eps ** (j - 1) for j in range(1, r + 1)))
    if r < 2:
        return lower, lower
    # Q(y) = sum_{i=0}^{r-1} b_i y^i with b_i = (-1)^i 2(i+1) eps^i
    n = r - 1
    b = [(-1) ** i * 2 * (i + 1) * eps**i for i in range(r)]
    lead = abs(b[n])
    terms = [abs(b[n - k]) / lead for k in range(1, n + 1)]
    terms[-1] /= 2
    ymax = 2 * max(t ** (1.0 / k) for k, t in enumerate(terms, start=1))
    return lower, math.sqrt(ymax)


@dataclass(frozen=True)
class CriticalRadii:
    r: int
    eps: float
    roots: tuple
    inflections: tuple
    lower: float
    upper: float

    def within_bounds(self, rtol: float = 1e-12) -> bool:
        return all(self.lower * (1 - rtol) <= x <= self.upper * (1 + rtol) for x in self.roots)


def _scan_roots(fn, lo: float, hi: float, n: int, xtol: float) -> list:
    grid = np.geomspace(lo, hi, n)
    vals = [fn(x) for x in grid]
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            out.append(float(a))
        elif fa * fb < 0:
            out.append(float(optimize.brentq(fn, a, b, xtol=xtol * a, rtol=4 * np.finfo(float).eps)))
    if vals[-1] == 0:
        out.append(float(grid[-1]))
    return out


def critical_radii(r: int, eps: float, n_scan: int = 4000, xtol: float = 1e-14) -> CriticalRadii:
    """Positive roots of ``P_r'`` and ``P_r''`` by a log-spaced sign scan refined
    with Brent's method.  The scan range is padded around the proven bracket."""
    _check_eps(eps)
    lower, upper = root_bounds(r, eps)
    if r == 1:
        return CriticalRadii(1, eps, (), (), lower, upper)
    # work with the reduced polynomials in R so R = 0 is not a root
    q1 = lambda R: p_r_derivative(r, eps, R) / R
    roots = _scan_roots(q1, lower / 4, upper * 4, n_scan, xtol)
    infl = _scan_roots(lambda R: p_r_second_derivative(r, eps, R), lower / 8, upper * 4, n_scan, xtol)
    cr = CriticalRadii(r, eps, tuple(roots), tuple(infl), lower, upper)
    if not cr.within_bounds():
        raise RuntimeError(f"roots {roots} escape the bracket [{lower}, {upper}]")
    return cr


def threshold_K(eps: float) -> int:
    """``10 - ceil(log2 eps) / 2`` rounded up to an integer."""
    _check_eps(eps)
    m, e = math.frexp(eps)  # eps = m 2^e, m in [1/2, 1)
    clog = e - 1 if m == 0.5 else e
    return -((-(20 - clog)) // 2)


def _rho(R):
    """1 on the unit ball, 0 outside radius 2."""
    return bump(np.asarray(R, dtype=float) / 2.0)


def band_symbols(R, K: int):
    """``(low, medium, high)`` windows split at dyadic index ``K``."""
    low = _rho(2.0 ** (K + 1) * R)
    top = _rho(2.0 ** (-K) * R)
    return low, top - low, 1.0 - top


@dataclass
class BandSplit:
    low: ComplexField
    medium: ComplexField
    high: ComplexField
    K: int
    K_used: int
    clamped: bool

    def __iter__(self):
        return iter((self.low, self.medium, self.high))


def band_project(f: ComplexField, eps: float) -> BandSplit:
    """Split into ``j < -K'``, ``|j| <= K'`` and ``j > K'`` dyadic blocks with
    ``K' = min(K(eps), ceil(log2 xi_max))``."""
    K = threshold_K(eps)
    g = f.grid
    jmax = max(0, math.ceil(math.log2(g.xi_max))) if g.xi_max > 0 else 0
    Ku = min(K, jmax)
    lo, me, hi = band_symbols(g.xi_abs, Ku)
    s = f.spectral()
    mk = lambda w: ComplexField(g, w * s, Representation.SPECTRAL)
    return BandSplit(mk(lo), mk(me), mk(hi), K, Ku, Ku < K)


# ---------------------------------------------------------------------------
# kernel decay


def _bessel_kernel(nu: float, z: np.ndarray) -> np.ndarray:
    """``J_nu(z) / z^nu`` with the removable singularity at 0 filled in."""
    out = np.empty_like(z)
    small = z < 1e-8
    zs = z[~small]
    if nu == 0:
        out[~small] = special.j0(zs)
    elif nu == 0.5:
        out[~small] = math.sqrt(2 / math.pi) * np.sin(zs) / zs
    elif nu == -0.5:
        out[~small] = math.sqrt(2 / math.pi) * np.cos(zs)
    else:
        out[~small] = special.jv(nu, zs) / zs**nu
    out[small] = 1.0 / (2**nu * special.gamma(nu + 1))
    return out


def radial_kernel(window, phase, t: float, radii: np.ndarray, d: int, R_max: float, n_nodes: Optional[int] = None, R_min: float = 0.0):
    """Inverse Fourier transform of the radial symbol ``window(R) e^{i t phase(R)}``
    at the given radii, by trapezoid quadrature on ``[R_min, R_max]``.

    ``K(x) = (2pi)^{-d/2} int m(R) [J_{d/2-1}(|x| R) / (|x| R)^{d/2-1}] R^{d-1} dR``.
    With ``n_nodes=None`` the node count is chosen so the total phase advances
    at most ``pi/8`` per node.
    """
    radii = np.asarray(radii, dtype=float)
    if n_nodes is None:
        probe = np.linspace(R_min, R_max, 4097)
        slope = np.abs(np.gradient(t * phase(probe), probe)).max() + radii.max()
        n_nodes = int(min(max(2048, 8 * slope * (R_max - R_min) / np.pi), 1 << 20))
    R = np.linspace(R_min, R_max, n_nodes)
    dR = R[1] - R[0]
    ph = t * phase(R)
    jump = np.abs(np.diff(ph)).max() + radii.max() * dR
    if jump > np.pi / 6:
        raise ValueError(f"under-resolved quadrature: phase step {jump:.3g} rad; raise n_nodes")
    w = np.full(n_nodes, dR)
    w[0] = w[-1] = dR / 2
    m = w * window(R) * np.exp(1j * ph) * R ** (d - 1)
    keep = m != 0
    R, m = R[keep], m[keep]
    nu = d / 2 - 1
    out = np.empty(len(radii), dtype=complex)
    chunk = max(1, (1 << 22) // max(len(R), 1))
    for i in range(0, len(radii), chunk):
        z = np.outer(radii[i : i + chunk], R)
        out[i : i + chunk] = _bessel_kernel(nu, z) @ m
    return out / (2 * np.pi) ** (d / 2)


def kernel_sup(window, phase, t: float, d: int, R_max: float, x_max: float, n_x: int = 96, n_nodes: Optional[int] = None, R_min: float = 0.0) -> float:
    radii = np.linspace(0.0, x_max, n_x)
    return float(np.abs(radial_kernel(window, phase, t, radii, d, R_max, n_nodes, R_min)).max())


@dataclass
class DecayFit:
    band: str
    times: np.ndarray
    sup_values: np.ndarray
    fitted_exponent: float
    fit_quality: float
    predicted_exponent: float
    scaled: bool = False
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.sup_values = np.asarray(self.sup_values, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.sup_values <= 0):
            raise ValueError("sup values must be positive")


def _fit(times, vals):
    lt, lv = np.log(times), np.log(vals)
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    pred = A @ coef
    ss = float(((lv - lv.mean()) ** 2).sum())
    r2 = 1.0 - float(((lv - pred) ** 2).sum()) / ss if ss > 0 else 1.0
    return float(coef[0]), r2, coef


def _fixed_slope_residual(times, vals, slope):
    lt, lv = np.log(times), np.log(vals)
    b = float(np.mean(lv - slope * lt))
    return float(np.sqrt(np.mean((lv - slope * lt - b) ** 2)))


# band-specific desk settings in scaled variables (see kernel_decay_fit)
HIGH_TAPER_LOG2 = 4
HIGH_WINDOW = (5.0, 11.0)  # range of tau^{-1/4}
MEDIUM_CAP_FACTOR = 2.0


def default_times(band: str, r: int, c: float, d: int = 2, n: int = 12) -> np.ndarray:
    """Fit windows in the scaled time of each band.

    * low: ``s = t 4^{-K}`` on ``[4 * 2pi, 80 * 2pi]`` (past the first stationary-phase cycles)
    * high: ``tau = t eps 16^K`` with ``tau^{-1/4}`` on ``HIGH_WINDOW``, inside the
      band ``[1, 2^M]`` where dyadic blocks with ``tau 16^j ~ 1`` dominate
    * medium: physical ``t`` on ``[2pi / R_1^2, 10 * 2pi / R_1^2]`` around the critical sphere
    """
    if band == "low":
        return np.geomspace(8 * np.pi, 160 * np.pi, n)
    if band == "high":
        lo, hi = HIGH_WINDOW
        return np.geomspace(hi**-4, lo**-4, n)
    if band == "medium":
        eps = 1.0 / (c * c)
        R1 = (2 * eps) ** -0.5 if r >= 2 else 1.0
        return np.geomspace(2 * np.pi / R1**2, 20 * np.pi / R1**2, n)
    raise ValueError(f"unknown band {band!r}")


def kernel_decay_fit(
    r: int,
    c: float,
    band: str,
    d: int = 2,
    times: Optional[Sequence[float]] = None,
    true_symbol: bool = False,
    n_nodes: Optional[int] = None,
    n_x: int = 96,
) -> DecayFit:
    """Fit ``log sup_x |K_band(t, x)|`` against ``log t``.

    Bands use the unclamped threshold ``K = threshold_K(eps)`` and are evaluated
    in rescaled variables so no grid has to resolve ``2^K``:

    * low: ``eta = 2^K R`` on the window ``rho(2 eta)``; phase ``s eta^2`` with
      ``s = t 4^{-K}`` (the quartic part is below ``eps 4^{-K} s`` and kept).
      Predicted exponent ``-d/2``.
    * high: ``eta = 2^{-K} R`` on ``(1 - rho(eta)) rho(eta / 2^M)``; phase
      ``tau (eps^{-1} 4^{-K} eta^2 - eta^4)`` with ``tau = t eps 16^K`` (sign of
      the quartic term for ``r = 2``).  Predicted exponent ``-d/(2r)``.
    * medium: physical ``R`` on ``rho(2^{-K} R) - rho(2^{K+1} R)`` tapered by
      ``rho(R / (2 R_1))``, a desk cap vanishing beyond ``4 R_1``.  Both
      ``-d/2`` and ``-d/2 + 1/6`` are reported with residuals.

    The returned ``times`` are in the band's own time variable (``scaled``).
    """
    if r < 1 or d < 1:
        raise ValueError("need r >= 1 and d >= 1")
    eps = 1.0 / (c * c)
    _check_eps(eps)
    K = threshold_K(eps)
    times = default_times(band, r, c, d) if times is None else np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    extra = {"K": K, "eps": eps}

    if band == "low":
        q = 4.0**-K
        phase = lambda eta: _phase(r, eps * q, eta, true_symbol)
        window = lambda eta: _rho(2.0 * eta)
        R_max = 1.0
        pts = lambda s: (window, phase, s, 2.0 * s * R_max + 8.0, R_max, 0.0)
        predicted = -d / 2
    elif band == "high":
        if r < 2:
            raise ValueError("the high band has a quartic phase only for r >= 2")
        M = HIGH_TAPER_LOG2
        a = 1.0 / (eps * 4.0**K)
        # rescaled model phase / tau: sum_j (-1)^{j+1} eps^{j-1} 4^{jK} eta^{2j} / (eps 16^K)
        def phase(eta):
            e2 = eta**2
            out = np.zeros_like(e2)
            coeffs = dispersion_coefficients(r) if true_symbol else None
            for j in range(1, r + 1):
                wj = (-1) ** (j + 1) if coeffs is None else -float(coeffs[j - 1]) * (-1) ** (j + 1)
                out = out + wj * eps ** (j - 2) * 4.0 ** (K * (j - 2)) * e2**j
            return out
        window = lambda eta: (1.0 - _rho(eta)) * _rho(eta / 2.0**M)
        R_max = 2.0 ** (M + 1)
        pts = lambda tau: (window, phase, tau, 4.0 * tau ** 0.25 + 4.0, R_max, 0.5)
        predicted = -d / (2 * r)
        extra["taper_log2"] = M
    elif band == "medium":
        R1 = (2 * eps) ** -0.5 if r >= 2 else 1.0
        cap = MEDIUM_CAP_FACTOR * R1
        phase = lambda R: _phase(r, eps, R, true_symbol)
        window = lambda R: (_rho(2.0**-K * R) - _rho(2.0 ** (K + 1) * R)) * _rho(R / cap)
        R_max = 2 * cap
        pts = lambda t: (window, phase, t, 4.0 * t * abs(p_r_derivative(r, eps, 2 * R1)) + 8.0 / R1, R_max, 0.0)
        predicted = -d / 2
        extra["R1"] = R1
        extra["cap"] = cap
    else:
        raise ValueError(f"unknown band {band!r}")

    sups = []
    for t in times:
        win, ph, tt, xmax, Rm, Rmin = pts(t)
        sups.append(kernel_sup(win, ph, tt, d, Rm, xmax, n_x, n_nodes, Rmin))
    sups = np.asarray(sups)
    slope, r2, _ = _fit(times, sups)
    if band == "medium":
        extra["candidates"] = {
            -d / 2: _fixed_slope_residual(times, sups, -d / 2),
            -d / 2 + 1 / 6: _fixed_slope_residual(times, sups, -d / 2 + 1 / 6),
        }
    return DecayFit(band, times, sups, slope, r2, predicted, True, extra)


# ---------------------------------------------------------------------------
# admissibility and Strichartz probes


def _inv(p) -> Fraction:
    if isinstance(p, float) and math.isinf(p):
        return Fraction(0)
    if isinstance(p, str) and p.lower() in ("inf", "infinity", "oo"):
        return Fraction(0)
    pf = Fraction(p)
    if pf <= 0:
        raise ValueError(f"exponent must be positive, got {p}")
    return 1 / pf


@dataclass(frozen=True)
class AdmissibilityResult:
    ok: bool
    reason: str

    def __bool__(self):
        return self.ok


def _in_convex(pt, poly) -> bool:
    x, y = pt
    sign = 0
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        cr = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if cr != 0:
            s = 1 if cr > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                return False
    return True


def admissible_check(p, q, d: int, r: int = 1, kind: str = "schrodinger") -> AdmissibilityResult:
    """Exact rational check of the exponent constraints (``inf`` allowed)."""
    ip, iq = _inv(p), _inv(q)
    if not (0 <= ip <= 1 and 0 <= iq <= 1):
        return AdmissibilityResult(False, "p and q must lie in [1, inf]")
    d_ = Fraction(d)
    if kind == "schrodinger":
        if ip > Fraction(1, 2):
            return AdmissibilityResult(False, "need 2 <= p <= inf")
        if iq > Fraction(1, 2):
            return AdmissibilityResult(False, "need q >= 2")
        if d > 2 and iq < (d_ - 2) / (2 * d_):
            return AdmissibilityResult(False, f"need q <= 2d/(d-2) = {2 * d_ / (d_ - 2)}")
        if 2 * ip + d_ * iq != d_ / 2:
            return AdmissibilityResult(False, f"need 2/p + d/q = d/2; got {2 * ip + d_ * iq}")
        if ip == Fraction(1, 2) and iq == 0 and d == 2:
            return AdmissibilityResult(False, "(p,q,d) = (2,inf,2) is excluded")
        return AdmissibilityResult(True, "schrodinger-admissible")
    if kind == "order_r":
        if r < 1:
            return AdmissibilityResult(False, "r must be >= 1")
        if ip > Fraction(1, 2) or iq > Fraction(1, 2):
            return AdmissibilityResult(False, "need 2 <= p, q <= inf")
        if r == 1 and d > 2 and iq < (d_ - 2) / (2 * d_):
            return AdmissibilityResult(False, f"need q <= 2d/(d-2) for r=1")
        if 2 * ip + d_ * iq / r != d_ / (2 * r):
            return AdmissibilityResult(False, f"need 2/p + d/(rq) = d/(2r); got {2 * ip + d_ * iq / r}")
        return AdmissibilityResult(True, f"order-{r} admissible")
    if kind == "quadrilateral":
        if r < 2:
            return AdmissibilityResult(False, "quadrilateral needs r >= 2")
        tau = Fraction(2 * r - 1, r - 1)
        A = (Fraction(1, 2), Fraction(1, 2))
        B = (Fraction(1), 1 / tau)
        C = (Fraction(1), Fraction(0))
        D = (1 - 1 / tau, Fraction(0))
        pt = (ip, iq)
        for name, corner in (("A", A), ("B", B), ("D", D)):
            if pt == corner:
                return AdmissibilityResult(False, f"corner {name} is excluded")
        if not _in_convex(pt, [A, B, C, D]):
            return AdmissibilityResult(False, "(1/p, 1/q) outside quadrilateral ABCD")
        return AdmissibilityResult(True, "inside quadrilateral")
    raise ValueError(f"unknown kind {kind!r}")


@dataclass
class StrichartzTable:
    p: float
    q: float
    c_list: list
    ratios: list
    lhs: list
    rhs: list

    @property
    def spread(self) -> float:
        return max(self.ratios) / min(self.ratios)


def strichartz_probe(p, q, c_list, psi0: ComplexField, T: float, n_t: int = 65) -> StrichartzTable:
    """Ratio of ``||<D>_c^{1/q-1/p} e^{itc<D>_c} psi0||_{L^p_t([0,T]) L^q_x}`` to
    ``c^{1/q-1/p-1/2} ||<D>_c^{1/2} psi0||_{L^2}`` for each ``c``."""
    g = psi0.grid
    d = g.d
    res = admissible_check(p, q, d, 1, "schrodinger")
    if not res:
        raise ValueError(f"inadmissible pair (p={p}, q={q}, d={d}): {res.reason}")
    ip, iq = float(_inv(p)), float(_inv(q))
    pf = math.inf if ip == 0 else 1 / ip
    qf = math.inf if iq == 0 else 1 / iq
    s = iq - ip
    ts = np.linspace(0.0, T, n_t)
    ratios, lhs_l, rhs_l = [], [], []
    for c in c_list:
        br = np.sqrt(c * c + g.xi_sq)
        base = br**s * psi0.spectral()
        traj = [(t, ComplexField(g, np.exp(1j * t * c * br) * base, Representation.SPECTRAL)) for t in ts]
        lhs = spacetime_norm(traj, pf, qf, 0.0)
        e = np.abs(psi0.spectral()) ** 2 * g.cell / g.size
        rhs = c ** (s - 0.5) * math.sqrt(float(np.sum(br * e)))
        ratios.append(lhs / rhs)
        lhs_l.append(lhs)
        rhs_l.append(rhs)
    return StrichartzTable(p, q, list(c_list), ratios, lhs_l, rhs_l)
