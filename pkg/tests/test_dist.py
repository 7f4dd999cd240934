import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wmlab.dist import (Categorical, aggregate, excess_closed_form, plus_part_excess,
                        project_min_excess, tv_distance)
from wmlab.errors import DomainError
from wmlab.seq_opt import min_excess_lp


def probs_strategy(max_size=6):
    raw = arrays(np.float64, st.integers(1, max_size), elements=st.floats(0.0, 1.0))
    return raw.filter(lambda a: a.sum() > 1e-3).map(lambda a: a / a.sum())


unit = st.floats(0.0, 1.0)


def test_categorical_validation():
    with pytest.raises(DomainError):
        Categorical([0.5, 0.6])
    with pytest.raises(DomainError):
        Categorical([1.2, -0.2])
    with pytest.raises(DomainError):
        Categorical([])
    with pytest.raises(DomainError):
        Categorical([np.nan, 1.0])
    c = Categorical([0.25, 0.75])
    with pytest.raises(ValueError):
        c.probs[0] = 1.0


def test_categorical_tolerance_and_normalize():
    c = Categorical([0.5, 0.5 + 5e-10])
    assert c.normalized().probs.sum() == pytest.approx(1.0, abs=1e-15)
    assert Categorical.uniform(4) == Categorical([0.25] * 4)
    assert Categorical.point_mass(3, 1).probs.tolist() == [0, 1, 0]


def test_plus_part_examples():
    assert plus_part_excess([0.5, 0.3, 0.2], 0.25) == pytest.approx(0.30, abs=1e-15)
    assert plus_part_excess([0.5, 0.5], 1.0) == 0.0
    assert plus_part_excess([1.0, 0.0], 0.0) == 1.0
    with pytest.raises(DomainError):
        plus_part_excess([1.0], 1.5)


def test_tv_examples():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.7, 0.3], [0.4, 0.6]) == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(DomainError):
        tv_distance([1.0], [0.5, 0.5])


def test_projection_examples():
    r = project_min_excess([0.5, 0.3, 0.2], 0.25, 0.0)
    assert r.projected.probs.tolist() == [0.5, 0.3, 0.2]
    assert r.objective == pytest.approx(0.30, abs=1e-15)
    r = project_min_excess([0.5, 0.3, 0.2], 0.25, 0.04)
    assert r.objective == pytest.approx(0.26, abs=1e-12)
    np.testing.assert_allclose(r.projected.probs, [0.46, 0.30, 0.24], atol=1e-12)
    r = project_min_excess([0.5, 0.3, 0.2], 0.25, 0.05)
    assert r.objective == pytest.approx(0.25, abs=1e-12)
    # past the deficit, the unused budget stays unused
    r = project_min_excess([0.5, 0.3, 0.2], 0.25, 0.2)
    assert r.objective == pytest.approx(0.25, abs=1e-12)
    assert r.mass_moved == pytest.approx(0.05, abs=1e-12)


def test_projection_rejects_bad_parameters():
    with pytest.raises(DomainError):
        project_min_excess([0.5, 0.5], -0.1, 0.0)
    with pytest.raises(DomainError):
        project_min_excess([0.5, 0.5], 0.5, -1.0)
    with pytest.raises(DomainError):
        project_min_excess([0.5, 0.5], 0.5, float("nan"))


def test_aggregate():
    np.testing.assert_allclose(aggregate([0.5, 0.3, 0.2], [0, 0, 1]), [0.8, 0.2])
    np.testing.assert_allclose(aggregate([0.5, 0.5], [1, 1], 3), [0, 1, 0])


@given(probs_strategy(), unit)
def test_plus_part_min_identity(p, t):
    assert abs(plus_part_excess(p, t) - (1 - np.minimum(p, t).sum())) <= 1e-12


@given(probs_strategy(), probs_strategy())
def test_tv_symmetric_bounded(p, q):
    if p.size != q.size:
        return
    d = tv_distance(p, q)
    assert 0 <= d <= 1 + 1e-12
    assert d == pytest.approx(tv_distance(q, p), abs=1e-15)


@given(probs_strategy(), unit, st.floats(0.0, 1.0))
def test_projection_invariants(q, alpha, eps):
    r = project_min_excess(q, alpha, eps)
    assert abs(r.objective - plus_part_excess(r.projected, alpha)) <= 1e-12
    assert tv_distance(r.projected, q) <= eps + 1e-12
    assert 0 <= r.mass_moved <= eps + 1e-15
    assert abs(r.objective - excess_closed_form(q, alpha, eps)) <= 1e-12
    deficit = np.maximum(alpha - q, 0).sum()
    if deficit >= eps:
        assert abs(r.objective - max(plus_part_excess(q, alpha) - eps, 0)) <= 1e-12


@given(probs_strategy(), unit)
def test_projection_noop_without_excess(q, alpha):
    if plus_part_excess(q, alpha) == 0:
        r = project_min_excess(q, alpha, 0.3)
        assert r.objective == 0 and r.mass_moved == 0
        assert np.array_equal(r.projected.probs, q)


def test_projection_monotone_grid(rng):
    for _ in range(20):
        q = rng.dirichlet(np.ones(5))
        grid = np.linspace(0, 1, 21)
        by_eps = [project_min_excess(q, 0.2, e).objective for e in grid]
        by_alpha = [project_min_excess(q, a, 0.1).objective for a in grid]
        assert all(b <= a + 1e-15 for a, b in zip(by_eps, by_eps[1:]))
        assert all(b <= a + 1e-15 for a, b in zip(by_alpha, by_alpha[1:]))


def test_projection_matches_lp_oracle(rng):
    for m in range(1, 6):
        for _ in range(6):
            q = rng.dirichlet(np.ones(m) * 0.7)
            for alpha in (0.05, 0.2, 0.35, 0.6, 1.0):
                for eps in (0.0, 0.03, 0.1, 0.4, 1.0):
                    got = project_min_excess(q, alpha, eps).objective
                    assert abs(got - min_excess_lp(q, alpha, eps)) <= 1e-9


def test_projection_matches_dense_grid():
    # brute force over a simplex lattice for m = 3
    q = np.array([0.55, 0.3, 0.15])
    step = 0.005
    pts = []
    for i in range(201):
        for j in range(201 - i):
            pts.append((i * step, j * step, 1 - (i + j) * step))
    pts = np.array(pts)
    tv = 0.5 * np.abs(pts - q).sum(axis=1)
    for alpha, eps in [(0.25, 0.04), (0.2, 0.2), (0.4, 0.1)]:
        ok = tv <= eps + 1e-12
        brute = np.maximum(pts[ok] - alpha, 0).sum(axis=1).min()
        got = project_min_excess(q, alpha, eps).objective
        assert got <= brute + 1e-12
        assert brute - got <= 2 * step
