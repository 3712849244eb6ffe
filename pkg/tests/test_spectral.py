import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonrel_lab.spectral import (
    ComplexField,
    FourierMultiplier,
    GridMismatchError,
    Representation,
    apply_multiplier,
    boundary_mass_fraction,
    bracket_power,
    bump,
    cutoff,
    japanese_bracket,
    l2_norm,
    laplacian,
    lp_max_index,
    lp_project,
    lp_square_norm,
    lp_symbol,
    make_grid,
    modulation_norm,
    random_field,
    smooth_step,
    sobolev_norm,
    spacetime_norm,
    square_indices,
    square_project,
    square_symbol,
    square_tilde_project,
    transform,
)


def plane_wave(g, k):
    return ComplexField.from_function(g, lambda *x: np.exp(1j * sum(ki * xi for ki, xi in zip(k, x))))


@pytest.fixture
def g2():
    return make_grid(2, 32, 2 * np.pi)


def test_grid_basics(g2):
    assert g2.shape == (32, 32)
    assert g2.dx == pytest.approx(2 * np.pi / 32)
    assert g2.volume == pytest.approx(4 * np.pi**2)
    with pytest.raises(ValueError):
        make_grid(4, 8)
    with pytest.raises(ValueError):
        make_grid(2, 7)


def test_transform_roundtrip(g2):
    f = random_field(g2, 1, localize=False)
    back = transform(transform(f, "forward"), "inverse")
    assert np.allclose(back.physical(), f.physical(), atol=1e-14)
    assert transform(f, "forward").representation == Representation.SPECTRAL


def test_parseval(g2):
    f = random_field(g2, 2, localize=False)
    phys = math.sqrt(float(np.sum(np.abs(f.physical()) ** 2)) * g2.cell)
    assert abs(l2_norm(f) - phys) <= 1e-12 * phys


def test_grid_mismatch():
    a = ComplexField.zeros(make_grid(1, 16))
    b = ComplexField.zeros(make_grid(1, 32))
    with pytest.raises(GridMismatchError):
        a + b
    with pytest.raises(GridMismatchError):
        apply_multiplier(a, FourierMultiplier.from_table(make_grid(1, 32), np.ones(32)))


def test_bracket_on_plane_wave():
    g = make_grid(2, 16, 2 * np.pi)
    f = plane_wave(g, (3, 0))
    out = apply_multiplier(f, japanese_bracket(2.0))
    assert np.allclose(out.physical(), math.sqrt(13) * f.physical(), atol=1e-12)


def test_bracket_twice_is_c2_minus_laplacian(g2):
    f = random_field(g2, 3, localize=False)
    jb = japanese_bracket(2.0)
    twice = apply_multiplier(apply_multiplier(f, jb), jb)
    once = f * 4.0 - apply_multiplier(f, laplacian())
    assert np.max(np.abs(twice.physical() - once.physical())) <= 1e-12 * np.max(np.abs(once.physical()))
    comp = apply_multiplier(f, jb @ jb)
    assert np.allclose(comp.physical(), twice.physical(), atol=1e-12)


def test_ratio_power_identities(g2):
    one = ComplexField(g2, np.ones(g2.shape, complex))
    assert np.allclose(bracket_power(one, 3.0, 0.5).physical(), 1.0, atol=1e-14)
    f = random_field(g2, 4, localize=False)
    rt = bracket_power(bracket_power(f, 2.0, 0.5), 2.0, -0.5)
    assert np.allclose(rt.physical(), f.physical(), atol=1e-12)
    big = bracket_power(f, 1e6, 1.0)
    assert np.max(np.abs(big.physical() - f.physical())) <= 1e-6 * np.max(np.abs(f.physical()))


def test_smooth_profiles():
    y = np.linspace(-1, 2, 301)
    s = smooth_step(y)
    assert np.all(s[y <= 0] == 0) and np.all(s[y >= 1] == 1)
    assert np.allclose(s + smooth_step(1 - y), 1.0, atol=1e-15)
    R = np.linspace(0, 2, 201)
    b = bump(R)
    assert np.all(b[R <= 0.5] == 1) and np.all(b[R >= 1] == 0)


def test_lp_partition_of_unity():
    for d, N, L in [(1, 64, 2 * np.pi), (2, 64, 16 * np.pi), (3, 16, 2 * np.pi)]:
        g = make_grid(d, N, L)
        total = sum(lp_symbol(j, g.xi_abs) for j in range(lp_max_index(g) + 1))
        assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_lp_low_mode_and_cutoff():
    g = make_grid(1, 64, 8 * np.pi)  # frequency spacing 1/4
    f = plane_wave(g, (0.25,))
    assert np.allclose(lp_project(f, 0).physical(), f.physical(), atol=1e-14)
    for j in range(1, lp_max_index(g) + 1):
        assert np.max(np.abs(lp_project(f, j).physical())) < 1e-14
    h = random_field(g, 5, localize=False)
    recon = sum((lp_project(h, j) for j in range(1, lp_max_index(g) + 1)), lp_project(h, 0))
    assert np.allclose(recon.physical(), h.physical(), atol=1e-12)
    assert np.allclose(cutoff(h, lp_max_index(g)).physical(), h.physical(), atol=1e-12)


def test_square_partition_and_modes():
    g = make_grid(2, 32, 4 * np.pi)  # half-integer frequencies
    total = sum(square_symbol(g, k) for k in square_indices(g))
    assert np.max(np.abs(total - 1.0)) <= 1e-12
    f = plane_wave(make_grid(2, 16, 2 * np.pi), (2, -1))
    assert np.allclose(square_project(f, (2, -1)).physical(), f.physical(), atol=1e-14)
    assert np.max(np.abs(square_project(f, (1, -1)).physical())) < 1e-14
    h = random_field(g, 6, localize=False)
    recon = sum((square_project(h, k) for k in square_indices(g)), ComplexField.zeros(g))
    assert np.allclose(recon.physical(), h.physical(), atol=1e-12)
    for k in [(0, 0), (1, -2), (3, 3)]:
        b = square_project(h, k)
        assert np.allclose(square_tilde_project(b, k).physical(), b.physical(), atol=1e-13)


def test_gauge_commutes_with_projections(g2):
    f = random_field(g2, 7, localize=False)
    ph = np.exp(0.7j)
    assert np.allclose(lp_project(f * ph, 2).physical(), (lp_project(f, 2) * ph).physical(), atol=1e-15)
    assert np.allclose(square_project(f * ph, (1, 0)).physical(), (square_project(f, (1, 0)) * ph).physical(), atol=1e-15)


def test_sobolev_examples(g2):
    one = ComplexField(g2, np.ones(g2.shape, complex))
    for k in (0, 1, 3.5):
        assert sobolev_norm(one, k) == pytest.approx(2 * np.pi, rel=1e-14)
    f = plane_wave(g2, (1, 0))
    assert sobolev_norm(f, 1) == pytest.approx(math.sqrt(2) * l2_norm(f), rel=1e-14)
    assert sobolev_norm(ComplexField.zeros(g2), 2) == 0.0
    h = random_field(g2, 8, localize=False)
    vals = [sobolev_norm(h, k) for k in (0, 0.5, 1, 2, 4)]
    assert vals[0] == pytest.approx(l2_norm(h))
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        sobolev_norm(h, -1)


def test_modulation_single_mode(g2):
    for k0 in [(0, 0), (2, -1), (5, 3)]:
        f = plane_wave(g2, k0)
        for s in (0.0, 1.0, 2.5):
            expect = (1 + k0[0] ** 2 + k0[1] ** 2) ** (s / 2) * l2_norm(f)
            assert abs(modulation_norm(f, s) - expect) <= 1e-12 * expect
    assert modulation_norm(ComplexField.zeros(g2), 1.0) == 0.0


def test_linf_domination_constant():
    g = make_grid(2, 32, 4 * np.pi)
    ratios = []
    for seed in range(100):
        f = random_field(g, seed, band=6, localize=False)
        ratios.append(np.max(np.abs(f.physical())) / modulation_norm(f, 0.0))
    # Cauchy-Schwarz per block: frequency spacing 1/2, so a window of width 4/3
    # meets 3 modes per axis
    bound = math.sqrt(9 / g.volume)
    assert max(ratios) <= bound * (1 + 1e-12)


def test_lp_square_norm_equivalence():
    g = make_grid(2, 32, 4 * np.pi)
    ratios = []
    for seed in range(100):
        f = random_field(g, seed, localize=False)
        ratios.append(lp_square_norm(f, 1.0) / sobolev_norm(f, 1.0))
    assert 0.1 < min(ratios) <= max(ratios) < 10.0
    assert max(ratios) / min(ratios) < 3.0


def test_spacetime_norm_examples(g2):
    f = random_field(g2, 9, localize=False)
    traj = [(t, f) for t in np.linspace(0, 2.0, 11)]
    assert spacetime_norm(traj, 2, 2) == pytest.approx(math.sqrt(2.0) * l2_norm(f), rel=1e-12)
    scaled = [(t, f * (1 + t)) for t in np.linspace(0, 1, 5)]
    assert spacetime_norm(scaled, math.inf, 2) == pytest.approx(2 * l2_norm(f), rel=1e-12)
    assert spacetime_norm([(0.0, f)], 3, 2) == pytest.approx(l2_norm(f), rel=1e-12)
    with pytest.raises(ValueError):
        spacetime_norm([], 2, 2)
    with pytest.raises(ValueError):
        spacetime_norm([(0, f), (1, f), (1.5, f)], 2, 2)


def test_random_field_properties():
    g = make_grid(2, 64, 16 * np.pi)
    f = random_field(g, 11, norm_k=4, amplitude=0.3)
    assert sobolev_norm(f, 4) == pytest.approx(0.3, rel=1e-12)
    assert np.all(np.abs(f.spectral())[g.xi_abs > g.N / 8 + 1e-9] == 0)
    assert boundary_mass_fraction(f) < 1e-8
    again = random_field(g, 11, norm_k=4, amplitude=0.3)
    assert np.array_equal(f.spectral(), again.spectral())


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1.0, 50.0), p=st.sampled_from([0.5, -0.5, 1.0, -1.0]), seed=st.integers(0, 10**6))
def test_bracket_power_group_law(c, p, seed):
    g = make_grid(1, 32, 2 * np.pi)
    f = random_field(g, seed, localize=False)
    rt = bracket_power(bracket_power(f, c, p), c, -p)
    assert np.allclose(rt.physical(), f.physical(), atol=1e-12)
