import math
import warnings

import numpy as np
import pytest

# the 32-point test grids are too coarse to keep the boundary layer below 1e-8
pytestmark = pytest.mark.filterwarnings("ignore:boundary-layer mass:RuntimeWarning")

from nonrel_lab.dynamics import (
    SimParams,
    SolverAbort,
    Trajectory,
    build_approximate,
    canonical_transform,
    error_metrics,
    from_first_order,
    lawson_rk4,
    nlkg_energy,
    nlkg_evolve,
    normalized_evolve,
    normalized_hamiltonian,
    normalized_symbol,
    normalized_vector_field,
    order2_termwise_report,
    printed_order2_rhs,
    to_first_order,
)
from nonrel_lab.functionals import named_functional, order2_coefficient
from nonrel_lab.spectral import ComplexField, make_grid, random_field, sobolev_norm

G1 = make_grid(1, 32, 8 * np.pi)
G2 = make_grid(2, 32, 8 * np.pi)


def params(grid=G2, c=2.0, lam=1.0, l=2, T=0.5, dt0=0.05, r=1, **kw):
    dt = T / math.ceil(T / (dt0 / c**2))
    return SimParams(c=c, lam=lam, l=l, grid=grid, dt=dt, T=T, r=r, **kw)


def test_params_validation():
    with pytest.raises(ValueError):
        params(c=0.5)
    with pytest.raises(ValueError):
        params(l=1)
    P = SimParams(c=4.0, lam=1.0, l=2, grid=G1, dt=0.1, T=1.0)
    with pytest.raises(ValueError):
        P.check_dt()
    SimParams(c=4.0, lam=1.0, l=2, grid=G1, dt=0.1, T=1.0, allow_large_dt=True).check_dt()
    with pytest.raises(ValueError):
        SimParams(c=1.0, lam=1.0, l=2, grid=G1, dt=0.3, T=1.0).n_steps


def test_first_order_roundtrip():
    rng = np.random.default_rng(0)
    u = ComplexField(G2, rng.standard_normal(G2.shape))
    v = ComplexField(G2, rng.standard_normal(G2.shape))
    uu, vv = from_first_order(to_first_order(u, v, 3.0), 3.0)
    assert np.allclose(uu.physical(), u.physical(), atol=1e-12)
    assert np.allclose(vv.physical(), v.physical(), atol=1e-12)
    z = ComplexField.zeros(G2)
    assert np.all(to_first_order(z, z, 2.0).physical() == 0)
    with pytest.raises(ValueError):
        to_first_order(ComplexField(G2, 1j * np.ones(G2.shape)), z, 2.0)


def test_first_order_cosine():
    g = make_grid(2, 16, 2 * np.pi)
    u = ComplexField.from_function(g, lambda x, y: np.cos(x))
    psi = to_first_order(u, ComplexField.zeros(g), 2.0)
    factor = (math.sqrt(5) / 2) ** 0.5 / math.sqrt(2)
    assert np.allclose(psi.physical(), factor * np.cos(g.x[0]), atol=1e-13)


def test_energy_examples():
    P = params(lam=0.0)
    assert nlkg_energy(ComplexField.zeros(G2), P) == 0.0
    k = 2 * np.pi / G2.L * 3
    A = 0.7
    f = ComplexField.from_function(G2, lambda x, y: A * np.exp(1j * k * x))
    expect = P.c * math.sqrt(P.c**2 + k * k) * A * A * G2.volume
    assert nlkg_energy(f, P) == pytest.approx(expect, rel=1e-13)


def test_linear_exactness():
    psi0 = random_field(G2, 1)
    P = params(lam=0.0, T=0.3)
    tr = nlkg_evolve(psi0, P)
    exact = np.exp(1j * P.T * P.c * np.sqrt(P.c**2 + G2.xi_sq)) * psi0.spectral()
    assert np.max(np.abs(tr.final.spectral() - exact)) <= 1e-12 * np.max(np.abs(exact))
    assert np.ptp(tr.diagnostics["norm"]) <= 1e-12 * tr.diagnostics["norm"][0]
    for order in (1, 2):
        tr = normalized_evolve(psi0, P, order)
        sym = P.c**2 + normalized_symbol(G2, P.c, order)
        exact = np.exp(1j * P.T * sym) * psi0.spectral()
        assert np.max(np.abs(tr.final.spectral() - exact)) <= 1e-12 * np.max(np.abs(exact))


def test_normalized_symbol_values():
    c = 3.0
    xi2 = G2.xi_sq
    assert np.allclose(normalized_symbol(G2, c, 1), xi2 / 2)
    assert np.allclose(normalized_symbol(G2, c, 2), xi2 / 2 - xi2**2 / (8 * c * c))


def test_trajectory_sampling():
    P = params(T=0.5, sample_every=7)
    tr = nlkg_evolve(random_field(G2, 2), P)
    assert tr.times[0] == 0 and tr.times[-1] == pytest.approx(P.T)
    assert len(tr.diagnostics["energy"]) == len(tr)
    steps = np.diff(tr.times[:-1])
    assert np.allclose(steps, steps[0])


def richardson_rate(evolve, grid, c=2.0, T=0.5):
    psi0 = random_field(grid, 3, amplitude=1.0)
    finals = []
    for dt0 in (0.04, 0.02, 0.01):
        P = params(grid=grid, c=c, T=T, dt0=dt0, sample_every=10**6)
        finals.append(evolve(psi0, P).final.spectral())
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    return math.log2(e1 / e2)


def test_richardson_nlkg():
    assert abs(richardson_rate(nlkg_evolve, G1) - 4) < 0.4


@pytest.mark.parametrize("order", [1, 2])
def test_richardson_normalized(order):
    ev = lambda f, P: normalized_evolve(f, P, order)
    assert abs(richardson_rate(ev, G1) - 4) < 0.4


def test_energy_drift_small_run():
    psi0 = random_field(G2, 4, norm_k=4, amplitude=0.1)
    P = params(c=2.0, T=0.5, dt0=0.02)
    assert nlkg_evolve(psi0, P).diagnostics["energy_drift"] < 1e-8
    for order in (1, 2):
        assert normalized_evolve(psi0, P, order).diagnostics["energy_drift"] < 1e-8


def test_normalized_vector_field_cubic():
    # order 1, l=2: i(c^2 psi - Lap psi / 2 + 3/4 lam |psi|^2 psi)
    g = make_grid(1, 8, 2 * np.pi)
    A = 0.3
    f = ComplexField(g, np.full(g.shape, A, complex))
    P = params(grid=g, lam=2.0, c=3.0)
    vf = normalized_vector_field(f, P, 1).physical()
    assert np.allclose(vf, 1j * (9 * A + 0.75 * 2.0 * A**3))


def test_gauge_covariance():
    psi0 = random_field(G2, 5, amplitude=0.5)
    P = params(T=0.3)
    ph = np.exp(0.9j)
    for order in (1, 2):
        a = normalized_evolve(psi0 * ph, P, order).final.physical()
        b = normalized_evolve(psi0, P, order).final.physical() * ph
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))


def test_reality_preserved():
    rng = np.random.default_rng(6)
    base = random_field(G2, 6, amplitude=0.5)
    u = ComplexField(G2, base.physical().real)
    v = ComplexField(G2, base.physical().imag)
    P = params(T=0.3)
    tr = nlkg_evolve(to_first_order(u, v, P.c), P)
    for f in tr.fields:
        uu, vv = from_first_order(f, P.c)
        # reconstruct through the forward map and check nothing imaginary was lost
        back = to_first_order(uu, vv, P.c)
        assert np.max(np.abs(back.physical() - f.physical())) <= 1e-10 * np.max(np.abs(f.physical()))


def test_blowup_aborts():
    g = make_grid(1, 8, 2 * np.pi)
    w = np.ones(8, complex)
    with pytest.raises(SolverAbort):
        lawson_rk4(w, np.zeros(8), lambda x: 50.0 * x, 0.01, 10_000, 1)


def test_transform_reversal_and_identity():
    psi = random_field(G2, 7, amplitude=0.5)
    fwd = canonical_transform(psi, 4.0, 2, 1.0, 1)
    back = canonical_transform(fwd, 4.0, 2, 1.0, -1)
    assert np.max(np.abs(back.physical() - psi.physical())) <= 1e-10 * np.max(np.abs(psi.physical()))
    assert np.array_equal(canonical_transform(psi, 4.0, 2, 0.0).physical(), psi.physical())
    with pytest.raises(ValueError):
        canonical_transform(psi, 4.0, 2, 1.0, 0)


def test_transform_scaling():
    psi = random_field(G2, 8, norm_k=2, amplitude=0.5)
    cs = np.array([2.0, 4.0, 8.0])
    d = [sobolev_norm(canonical_transform(psi, c, 2, 1.0) - psi, 2) / sobolev_norm(psi, 2) for c in cs]
    slope = np.polyfit(np.log(cs), np.log(d), 1)[0]
    assert abs(slope + 2) < 0.2


def test_build_approximate_and_metrics():
    psi0 = random_field(G2, 9, amplitude=0.3)
    P = params(T=0.2, sample_every=5)
    nt = normalized_evolve(psi0, P)
    ap = build_approximate(nt)
    assert len(ap) == len(nt)
    gap = sobolev_norm(ap.fields[0] - nt.fields[0], 2)
    assert gap <= 1.0 / P.c**2 * sobolev_norm(psi0, 2)
    assert error_metrics(nt, nt, 2).sup_error == 0.0
    P0 = params(T=0.2, lam=0.0, sample_every=5)
    assert all(np.array_equal(a.physical(), b.physical()) for a, b in zip(build_approximate(normalized_evolve(psi0, P0)).fields, normalized_evolve(psi0, P0).fields))
    short = Trajectory(P, nt.times[:2], nt.fields[:2])
    with pytest.raises(ValueError):
        error_metrics(nt, short)


def test_linear_symbol_residue_decreases():
    psi0 = random_field(G2, 10, amplitude=0.3)
    errs = []
    for c in (2.0, 4.0):
        P = params(c=c, lam=0.0, T=0.3, sample_every=10)
        errs.append(error_metrics(nlkg_evolve(psi0, P), normalized_evolve(psi0, P), 0).sup_error)
    assert errs[1] < errs[0] / 3


def test_order2_hamiltonian_matches_functional_sum():
    psi = random_field(G2, 11, amplitude=0.4)
    P = params(c=3.0, r=2)
    Z = named_functional("Z2", c=3.0, lam=1.0, l=2)
    h0, h1, F1a = (named_functional(n, c=3.0) for n in ("h0", "h1", "F1avg"))
    H1 = P.c**2 * h0(psi) + h1(psi) + F1a(psi)
    assert normalized_hamiltonian(psi, P, 1) == pytest.approx(H1, rel=1e-12)
    # Z2 already carries h1 + <F1>
    assert normalized_hamiltonian(psi, P, 2) == pytest.approx(P.c**2 * h0(psi) + Z(psi), rel=1e-12)


def test_termwise_report_lines():
    lines = order2_termwise_report(2, 1)
    text = "\n".join(lines)
    assert "FLAG: eps |psi|^4 psi: adopted -51/64, printed 51/8" in text
    assert "gauge equivariant" in text
    assert sum(ln.startswith("PASS") for ln in lines) == 5


def test_printed_rhs_breaks_gauge_equivariance():
    psi = random_field(G1, 12, amplitude=0.5)
    ph = np.exp(0.4j)
    a = printed_order2_rhs(psi * ph, 1.0, 2.0).physical()
    b = printed_order2_rhs(psi, 1.0, 2.0).physical() * ph
    assert np.max(np.abs(a - b)) > 1e-6 * np.max(np.abs(b))


def test_homogeneous_field_adjudicates_order2_coefficient():
    # spatially constant data: only the zero-derivative terms act, so the order-2
    # flow with the adopted coefficient must track NLKG far better than the
    # printed one over the long horizon c^2 / 2
    g = make_grid(1, 8, 2 * np.pi)
    res = {}
    for c in (3.0, 4.0):
        psi0 = ComplexField(g, np.full(g.shape, 0.4, complex))
        T = 0.5 * c * c
        out = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for name, kappa in (("adopted", None), ("printed", 17 / 8), ("none", 0.0)):
                P = params(grid=g, c=c, T=T, r=2, sample_every=200, kappa=kappa)
                true = nlkg_evolve(psi0, P)
                ap = build_approximate(normalized_evolve(canonical_transform(psi0, c, 2, 1.0, -1), P))
                out[name] = error_metrics(true, ap, 0).sup_relative
        res[c] = out
    for c, out in res.items():
        assert out["adopted"] < out["none"] / 10 < out["printed"] / 10
    assert res[4.0]["adopted"] < res[3.0]["adopted"]
    assert order2_coefficient(2) == pytest.approx(-17 / 64)


@pytest.mark.filterwarnings("default")
def test_boundary_warning_fires():
    g = make_grid(1, 8, 2 * np.pi)
    psi0 = ComplexField(g, np.full(g.shape, 0.1, complex))
    with pytest.warns(RuntimeWarning, match="boundary-layer"):
        nlkg_evolve(psi0, params(grid=g, T=0.1))


def test_wide_box_datum_keeps_boundary_quiet():
    g = make_grid(2, 64, 16 * np.pi)
    psi0 = random_field(g, 7, norm_k=4, amplitude=0.1 / 2**3.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        tr = nlkg_evolve(psi0, params(grid=g, T=0.2, sample_every=50))
    assert tr.diagnostics["boundary_mass"] < 1e-8
