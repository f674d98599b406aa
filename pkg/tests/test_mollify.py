import numpy as np
import pytest
from scipy import integrate

import modlab.mollify as mo
from modlab import fixtures, grid
from modlab.errors import CoverError, ParameterError, ResolutionError


def test_kernel_mass_is_one():
    assert integrate.quad(lambda t: mo.friedrichs_kernel(1, t), -1, 1, epsabs=1e-14)[0] == pytest.approx(1.0, abs=1e-12)
    m2 = integrate.dblquad(lambda y, x: mo.friedrichs_kernel(2, np.array([x, y])), -1, 1, -1, 1, epsabs=1e-10)[0]
    assert m2 == pytest.approx(1.0, abs=1e-8)
    assert mo.friedrichs_kernel(1, 1.0) == 0.0 and mo.friedrichs_kernel(1, 1.5) == 0.0


def test_discrete_kernel_sums_to_one():
    for d in (grid.interval(-1, 1, 4096), grid.square(-1, 1, 128)):
        for eps in (0.05, 0.1, 0.3):
            spec = mo.build_mollifier(d, eps)
            assert abs(spec.weights.sum() - 1.0) <= 1e-14
            assert spec.k == pytest.approx(mo.kernel_constant(d.dim), rel=1e-2)  # few nodes per radius in 2-D


def test_resolution_guard():
    d = grid.interval(-1, 1, 100)
    with pytest.raises(ResolutionError):
        mo.mollify(d.zeros(), 0.5 * d.h)


def test_constant_reproduced_away_from_edges():
    d = grid.interval(-2, 2, 2000)
    u = d.sample(lambda x: 0 * x + 3.0)
    v = mo.mollify(u, 0.1)
    core = np.abs(d.points) < 2 - 0.1 - 2 * d.h
    assert np.max(np.abs(v.values[core] - 3.0)) <= 1e-12


def test_hat_value_at_centre():
    d = grid.interval(-1, 1, 4096)
    v = mo.mollify(fixtures.hat(d, radius=1.0), 0.1)
    val = float(np.interp(0.0, d.points, v.values))
    assert 0.9 < val < 1.0


def test_exact_support():
    d = grid.interval(-1, 1, 1000)
    u = fixtures.hat(d, center=0.0, radius=0.3)
    eps = 0.1
    v = mo.mollify(u, eps)
    lo, hi = u.support_box[0]
    far = (d.points < lo - eps - d.h) | (d.points > hi + eps + d.h)
    assert np.all(v.values[far] == 0.0)
    near = (d.points > lo - eps + 2 * d.h) & (d.points < hi + eps - 2 * d.h)
    assert np.all(v.values[near] > 0)


def test_linearity(rng):
    d = grid.square(-1, 1, 64)
    u = fixtures.random_fixture(d, rng)
    w = fixtures.random_fixture(d, rng)
    a = mo.mollify(2 * u + w, 0.2)
    b = 2 * mo.mollify(u, 0.2) + mo.mollify(w, 0.2)
    assert np.max(np.abs(a.values - b.values)) <= 1e-12


def test_uniform_convergence_on_smooth_function():
    errs = []
    for eps in (0.2, 0.1, 0.05):
        d = grid.interval(-2, 2, 8000)
        u = d.sample(lambda x: np.exp(-4 * x**2))
        v = mo.mollify(u, eps)
        errs.append(np.max(np.abs(v.values - u.values)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / errs[1] == pytest.approx(0.25, abs=0.05)


def test_truncate():
    d = grid.interval(-5, 5, 1001)
    u = d.sample(lambda x: 0 * x + 1.0)
    t = mo.truncate(u, 1.0)
    assert np.all(t.values[np.abs(d.points) <= 1] == 1.0)
    assert np.all(t.values[np.abs(d.points) >= 2] == 0.0)
    assert np.all((t.values >= 0) & (t.values <= 1))


def test_translate_moves_graph():
    d = grid.interval(-1, 1, 200)
    u = fixtures.hat(d, center=0.0, radius=0.2)
    t = mo.translate(u, 20 * d.h)
    assert np.array_equal(t.values[20:], u.values[:-20])
    assert d.points[np.argmax(t.values)] == pytest.approx(d.points[np.argmax(u.values)] + 20 * d.h)
    assert np.array_equal(mo.translate(t, -20 * d.h).values[:-40], u.values[:-40])


def test_partition_of_unity():
    d = grid.interval(-0.5, 1.5, 2000, omega=(0, 1))
    boxes = [pc.inner for pc in mo.interval_cover((0, 1))]
    psi = mo.partition_of_unity(d, boxes)
    total = np.sum([p.values for p in psi], axis=0)
    assert np.allclose(total[d.omega_mask], 1.0, atol=1e-14)
    assert all(np.all(p.values >= 0) for p in psi)
    for p, b in zip(psi, boxes):
        pts = d.points[p.values > 0]
        assert pts.min() > b[0][0] and pts.max() < b[0][1]


def test_partition_requires_cover():
    d = grid.interval(0, 1, 500)
    with pytest.raises(CoverError):
        mo.partition_of_unity(d, [((-0.1, 0.4),), ((0.6, 1.1),)])


def test_partition_2d():
    d = grid.square(-1, 1, 64, omega=((-0.5, 0.5), (-0.5, 0.5)))
    boxes = [((-0.7, 0.1), (-0.7, 0.7)), ((-0.1, 0.7), (-0.7, 0.7))]
    psi = mo.partition_of_unity(d, boxes)
    assert np.allclose(sum(p.values for p in psi)[d.omega_mask], 1.0)


@pytest.fixture
def cover():
    d = grid.interval(-0.5, 1.5, 4096, omega=(0, 1))
    return mo.build_segment_cover(d, mo.interval_cover((0, 1)))


def test_segment_cover_geometry(cover):
    assert [pc.z for pc in cover.pieces[:2]] == [(0.5,), (-0.5,)]
    assert cover.r_max(0) == pytest.approx(min(1 / 1.5, 0.1 / 0.5))
    assert cover.r_max(2) == 0.0
    assert all(cover.check_segment_property(i) for i in range(3))
    g = cover.gamma_points(0)
    assert g.ravel().tolist() == [0.0]


def test_bad_segment_vector_rejected():
    d = grid.interval(-0.5, 1.5, 400, omega=(0, 1))
    pcs = mo.interval_cover((0, 1))
    bad = mo.CoverPiece(outer=pcs[0].outer, inner=pcs[0].inner, z=(-0.5,))
    with pytest.raises(CoverError):
        mo.build_segment_cover(d, [bad] + pcs[1:])


def test_shift_parameters_guard(cover):
    with pytest.raises(ParameterError):
        mo.shift_parameters(cover, 0, 0.5, 0.01)  # r > r_max
    r = 0.1
    emax = cover.eps_max(0, cover.snap_shift(0, r)[0])
    with pytest.raises(ParameterError):
        mo.shift_parameters(cover, 0, r, 1.5 * emax)
    with pytest.raises(ParameterError):
        mo.shift_parameters(cover, 2, 0.1, 0.01)


@pytest.mark.parametrize("direction", ["outward", "inward"])
def test_shifted_mollify_geometry(cover, direction):
    d = cover.domain
    u = fixtures.dome(d, center=0.5, radius=0.5)
    u0 = u * cover.psi[0]
    r = 0.1
    eps = 0.5 * cover.eps_max(0, cover.snap_shift(0, r)[0], direction)
    geo = mo.shift_geometry(cover, 0, r, eps, direction, u_i=u0)
    assert geo.inside
    if direction == "outward":
        assert geo.leak_free
        v = mo.shifted_mollify(u0, cover, 0, r, eps)
        assert np.all(v.values[~d.omega_mask] == 0)
    else:
        lo, hi = geo.support[0]
        assert lo > 0 and hi < 1


def test_shifted_mollify_approaches_piece(cover):
    d = cover.domain
    u = fixtures.dome(d, center=0.5, radius=0.5)
    u0 = u * cover.psi[0]
    errs = []
    for r in (0.1, 0.05, 0.025):
        eps = 0.5 * cover.eps_max(0, cover.snap_shift(0, r)[0])
        v = mo.shifted_mollify(u0, cover, 0, r, eps)
        errs.append(grid.lp_norm((v - u0).restrict(d.omega_mask), 2))
    assert errs[0] > errs[1] > errs[2]
