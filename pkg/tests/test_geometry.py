import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subpgd import (INF, NormSpec, Subspace, clip_pullback, dual_exponent,
                    lp_norm, normalized_gradient, project_ball)

P_VALUES = (1.0, 2.0, INF)

finite_vec = arrays(np.float64, st.integers(1, 12),
                    elements=st.floats(-1e6, 1e6, allow_nan=False))


def test_dual_exponent_pairs():
    assert dual_exponent(1) == INF
    assert dual_exponent(2) == 2.0
    assert dual_exponent(INF) == 1.0


@pytest.mark.parametrize("p", P_VALUES)
def test_dual_exponent_is_involutive(p):
    assert dual_exponent(dual_exponent(p)) == p


def test_dual_exponent_rejects_other_p():
    with pytest.raises(ValueError):
        dual_exponent(3)


@pytest.mark.parametrize("text,p", [("1", 1.0), ("2", 2.0), ("inf", INF),
                                    ("infinity", INF), ("linf", INF),
                                    ("INF", INF), (" 2 ", 2.0)])
def test_normspec_parse(text, p):
    spec = NormSpec.parse(text)
    assert spec.p == p
    assert spec.q == dual_exponent(p)


def test_normspec_labels():
    assert NormSpec(1).label == "1"
    assert NormSpec(2.0).label == "2"
    assert NormSpec(INF).label == "inf"


@pytest.mark.parametrize("bad", ["0", "3", "two", "", "l2"])
def test_normspec_parse_rejects(bad):
    with pytest.raises(ValueError):
        NormSpec.parse(bad)


def test_normspec_rejects_bad_exponent():
    with pytest.raises(ValueError):
        NormSpec(1.5)


@pytest.mark.parametrize("p,ord_", [(1.0, 1), (2.0, 2), (INF, np.inf)])
@given(v=finite_vec)
@settings(max_examples=30, deadline=None)
def test_lp_norm_matches_numpy(v, p, ord_):
    assert lp_norm(v, p) == pytest.approx(np.linalg.norm(v, ord=ord_))


def test_lp_norm_empty_and_nan():
    assert lp_norm(np.array([]), 2) == 0.0
    with pytest.raises(ValueError):
        lp_norm(np.array([1.0, np.nan]), 2)


@pytest.mark.parametrize("p", (1.0, 2.0))
@given(v=finite_vec)
@settings(max_examples=30, deadline=None)
def test_normalized_gradient_has_unit_norm(v, p):
    g = normalized_gradient(v, p)
    if np.any(v != 0):
        assert lp_norm(g, p) == pytest.approx(1.0)
    else:
        assert np.all(g == 0)


def test_normalized_gradient_inf_is_sign():
    g = np.array([-3.0, 0.0, 0.5])
    assert np.array_equal(normalized_gradient(g, INF), np.array([-1.0, 0.0, 1.0]))


def test_normalized_gradient_zero_maps_to_zero():
    for p in P_VALUES:
        assert np.all(normalized_gradient(np.zeros(4), p) == 0)


def test_normalized_gradient_rejects_nan():
    with pytest.raises(ValueError):
        normalized_gradient(np.array([np.nan]), 2)


@pytest.mark.parametrize("p", P_VALUES)
@given(v=finite_vec, eps=st.floats(1e-6, 1e3))
@settings(max_examples=40, deadline=None)
def test_project_ball_budget_and_idempotence(v, eps, p):
    proj = project_ball(v, eps, p)
    assert lp_norm(proj, p) <= eps * (1 + 1e-9)
    again = project_ball(proj, eps, p)
    assert np.array_equal(proj, again)


def test_project_ball_inside_is_identity():
    v = np.array([0.1, -0.2])
    out = project_ball(v, 1.0, 2)
    assert out is v


@pytest.mark.parametrize("p", P_VALUES)
def test_project_ball_radial_preserves_direction(p):
    v = np.array([3.0, -4.0, 1.0])
    proj = project_ball(v, 0.5, p)
    # proj is a positive multiple of v
    ratio = proj[v != 0] / v[v != 0]
    assert np.allclose(ratio, ratio[0])
    assert ratio[0] > 0
    assert lp_norm(proj, p) == pytest.approx(0.5)


def test_project_ball_clamp_mode():
    v = np.array([0.3, -2.0, 5.0])
    out = project_ball(v, 1.0, INF, mode="clamp")
    assert np.array_equal(out, np.array([0.3, -1.0, 1.0]))
    with pytest.raises(ValueError):
        project_ball(v, 1.0, 2, mode="clamp")
    with pytest.raises(ValueError):
        project_ball(v, 1.0, 2, mode="nope")


def test_project_ball_rejects_negative_eps():
    with pytest.raises(ValueError):
        project_ball(np.ones(2), -1.0, 2)


def test_project_ball_zero_eps_collapses():
    out = project_ball(np.ones(3), 0.0, 1)
    assert np.all(out == 0)


@given(x=arrays(np.float64, 6, elements=st.floats(0, 1)),
       delta=arrays(np.float64, 3, elements=st.floats(-5, 5, allow_nan=False)))
@settings(max_examples=40, deadline=None)
def test_clip_pullback_lands_in_box(x, delta):
    V = Subspace.basis_subset(6, (0, 2, 5))
    clipped = clip_pullback(x, delta, V)
    ambient = x + V.embed(clipped)
    assert np.all(ambient >= -1e-12)
    assert np.all(ambient <= 1 + 1e-12)
    # clipping toward the box never increases any coordinate's magnitude
    assert np.all(np.abs(clipped) <= np.abs(delta) + 1e-12)


def test_clip_pullback_noop_when_feasible():
    V = Subspace.basis_subset(4, (1, 3))
    x = np.full(4, 0.5)
    delta = np.array([0.2, -0.3])
    out = clip_pullback(x, delta, V)
    assert np.allclose(out, delta)


def test_clip_pullback_shape_check():
    V = Subspace.basis_subset(4, (0, 1))
    with pytest.raises(ValueError):
        clip_pullback(np.zeros(3), np.zeros(2), V)
