import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modlab import conjugate, fields, phi
from modlab.conjugate import EnvelopeTable
from modlab.errors import ConjugateTruncationWarning, DomainError, InputError

S = np.geomspace(1e-2, 1e2, 301)


def young(p, s):
    q = p / (p - 1)
    return s**q / q


def test_self_conjugate():
    t = conjugate.legendre_conjugate(phi.power(2, normalized=True), 0.0, S)
    assert np.all(np.abs(t.values - S**2 / 2) <= np.maximum(1e-12, t.gap))
    assert np.all(t.values <= S**2 / 2 * (1 + 1e-14))  # one-sided


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_power_conjugates(p):
    t = conjugate.legendre_conjugate(phi.power(p, normalized=True), 0.0, S)
    err = young(p, S) - t.values
    assert np.all(err <= t.gap + 1e-12 * young(p, S))
    assert np.max(np.abs(err)) <= 1e-6 * np.max(young(p, S))


def test_linear_conjugate_below_one():
    M = phi.make_family({"family": "orlicz_custom", "kind": "linear"})
    s = np.linspace(0, 0.99, 50)
    t = conjugate.legendre_conjugate(M, 0.0, s, t_grid=np.linspace(0, 50, 501))
    assert np.all(t.values == 0)


def test_truncation_warning():
    with pytest.warns(ConjugateTruncationWarning):
        conjugate.legendre_conjugate(phi.power(2, normalized=True), 0.0, S, t_grid=np.linspace(0, 10, 101))


def test_negative_s_rejected():
    with pytest.raises(DomainError):
        conjugate.legendre_conjugate(phi.power(2), 0.0, np.array([-1.0, 1.0]))


def test_conjugate_monotone_in_s():
    M = phi.make_family({"family": "double_phase", "p": 2, "q": 3, "a": 1.0})
    t = conjugate.legendre_conjugate(M, 0.0, S)
    assert np.all(np.diff(t.values) >= -1e-12)


def test_conjugate_csv_roundtrip(tmp_path):
    t = conjugate.legendre_conjugate(phi.power(2, normalized=True), 0.0, S[:20])
    t.to_csv(tmp_path / "c.csv")
    back = EnvelopeTable.from_csv(tmp_path / "c.csv")
    assert np.array_equal(back.values, t.values) and back.provenance == "conjugate"
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "s,value,provenance"


# -- hull -------------------------------------------------------------------------


def test_hull_identity_on_convex():
    s = np.linspace(0, 3, 61)
    env = conjugate.second_conjugate(s, s**2)
    assert np.allclose(env.values, s**2, rtol=0, atol=1e-12)


def test_hull_bridges_double_well():
    s = np.linspace(0, 3, 121)
    f = np.minimum(s**2, (s - 2) ** 2 + 1)
    env = conjugate.second_conjugate(s, f)
    oracle = conjugate.lower_hull_bruteforce(s, f)
    assert np.allclose(env.values, oracle, atol=1e-12)
    assert np.all(env.values <= f + 1e-12)
    assert env.is_convex()
    # the bridge: strictly below f somewhere in the well
    assert np.any(env.values < f - 1e-3)


def test_hull_two_points():
    env = conjugate.second_conjugate(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert np.allclose(env(np.linspace(0, 1, 5)), np.linspace(0, 1, 5))


def test_hull_needs_two_points():
    with pytest.raises(InputError):
        conjugate.second_conjugate(np.array([1.0]), np.array([1.0]))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=25))
def test_hull_matches_bruteforce(vals):
    s = np.arange(len(vals), dtype=float)
    v = np.array(vals)
    env = conjugate.second_conjugate(s, v)
    oracle = conjugate.lower_hull_bruteforce(s, v)
    assert np.allclose(env.values, oracle, atol=1e-9)
    assert np.all(env.values <= v + 1e-9)
    assert env.is_convex(tol=1e-7)


# -- Fenchel-Young --------------------------------------------------------------------


def test_fenchel_young_equality_and_example():
    M = phi.power(2, normalized=True)
    rep = conjugate.verify_fenchel_young(M, 0.0, np.array([1.0]), np.array([1.0]))
    assert abs(rep.max_violation) <= 1e-12 and rep.passed
    rep = conjugate.verify_fenchel_young(M, 0.0, np.array([1.0]), np.array([3.0]))
    assert rep.max_violation == pytest.approx(-2.0, abs=1e-10)


@pytest.mark.parametrize(
    "desc",
    [
        {"family": "double_phase", "p": 2, "q": 3, "a": 1.0},
        {"family": "variable_exponent", "p": {"kind": "affine", "c0": 2, "slope": 0.5}},
        {"family": "vexp_log", "p": 1.5},
        {"family": "vexp_smoothed", "p": 2.5},
        {"family": "exp_power", "p": 2},
    ],
)
def test_fenchel_young_builtin(desc):
    M = phi.make_family(desc)
    u = np.linspace(0, 5, 120)
    v = np.linspace(0, 20, 120)
    assert conjugate.verify_fenchel_young(M, 0.3, u, v).passed


# -- local envelopes ----------------------------------------------------------------------


def test_envelope_x_independent_is_m():
    M = phi.power(3)
    s = np.linspace(0, 5, 101)
    y = conjugate.ball_sample(0.2, 0.05, 17)
    env = conjugate.local_inf_envelope(M, 0.2, 0.1, y, s)
    assert np.allclose(env.values, s**3, rtol=1e-12, atol=1e-12) or np.all(env.values <= s**3 + 1e-12)
    assert np.max(np.abs(env.values - s**3)) <= 0.02 * np.max(s**3)


def test_envelope_double_phase_monotone_coefficient():
    a = fields.power_distance(1.0)
    M = phi.make_family({"family": "double_phase", "p": 2, "q": 3, "a": a})
    s = np.linspace(0, 4, 201)
    y = conjugate.ball_sample(0.5, 0.1, 33)
    env = conjugate.local_inf_envelope(M, 0.5, 0.2, y, s)
    brute = np.min(M(y[:, None], s[None, :]), axis=0)
    assert np.allclose(env.source["inf_values"], brute, rtol=0, atol=0)
    assert np.allclose(brute, s**2 + 0.4 * s**3, rtol=1e-13)
    # the infimum is convex already, so its envelope is itself up to chord rounding
    assert np.allclose(env.values, brute, rtol=1e-12, atol=1e-12)


def test_envelope_checkerboard_branch():
    a = fields.checkerboard(0.5, 2.0, period=0.3)
    M = phi.make_family({"family": "double_phase", "p": 2, "q": 3, "a": a})
    s = np.linspace(0, 4, 101)
    y = conjugate.ball_sample(0.3, 0.1, 41)
    env = conjugate.local_inf_envelope(M, 0.3, 0.2, y, s)
    assert np.allclose(env.values, s**2 + 0.5 * s**3, rtol=1e-12)
    assert env.source["tilde_shortcut_exact"] is False


def test_envelope_sample_must_be_in_half_ball():
    M = phi.power(2)
    with pytest.raises(InputError):
        conjugate.local_inf_envelope(M, 0.0, 0.2, np.array([0.0, 0.2]), np.linspace(0, 1, 5))
    with pytest.raises(InputError):
        conjugate.local_inf_envelope(M, 0.0, 0.2, np.array([]), np.linspace(0, 1, 5))


@pytest.mark.parametrize(
    "desc,x,eps",
    [
        ({"family": "orlicz_custom", "kind": "power", "p": 2}, 0.0, 0.3),
        ({"family": "double_phase", "p": 2, "q": 3, "a": {"kind": "power_distance", "beta": 0.5}}, 0.5, 0.25),
        ({"family": "variable_exponent", "p": {"kind": "affine", "c0": 2, "slope": 0.5, "log_holder": True}}, 0.2, 0.1),
    ],
)
def test_envelope_bound(desc, x, eps):
    M = phi.make_family(desc)
    y = conjugate.ball_sample(x, eps / 2, 33, omega=[(-1, 1)])
    rep = conjugate.verify_envelope_bound(M, M.witness, x, eps, y, phi.default_s_grid())
    assert rep.passed
    if M.x_independent:
        assert rep.max_ratio <= 0.25 + 1e-12
