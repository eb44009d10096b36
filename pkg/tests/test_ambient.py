import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minsphere.ambient import (
    DomainError, ambient_ricci, chart_embedding, ellipsoid, euclidean, exp_map,
    integrate_geodesic, metric_at, on_space, parallel_transport_sphere, project_tangent,
    round_sphere, scalar_curvature, space_from_json, unit_normal,
)

SPACES = [euclidean(), round_sphere(1.0), round_sphere(2.5), ellipsoid(2, 1.5, 1.2, 1)]


def random_points(space, n, rng):
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * np.asarray(space.semiaxes)


def random_unit_tangents(space, x, rng):
    v = project_tangent(space, x, rng.normal(size=x.shape))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.mark.parametrize("space", SPACES, ids=lambda s: s.kind + str(s.semiaxes))
def test_metric_positive_definite(space):
    rng = np.random.default_rng(0)
    q = np.column_stack([rng.uniform(1e-3, np.pi - 1e-3, 1000),
                         rng.uniform(1e-3, np.pi - 1e-3, 1000),
                         rng.uniform(0, 2 * np.pi, 1000)])
    for chart in (0, 1):
        for p in q:
            G = metric_at(space, p, chart)
            assert np.allclose(G, G.T)
            np.linalg.cholesky(G)


def test_metric_flat_and_round():
    assert np.array_equal(metric_at(euclidean(), [0.3, -2.0, 5.0]), np.eye(3))
    G = metric_at(round_sphere(1.0), [np.pi / 2, np.pi / 2, 0.7])
    assert np.allclose(G, np.eye(3), atol=1e-14)


def test_metric_matches_finite_difference_pullback():
    E = ellipsoid(2, 1.5, 1.2, 1)
    q = np.array([np.pi / 2] * 3)
    assert np.allclose(chart_embedding(E, q, chart=1), [2, 0, 0, 0], atol=1e-14)
    h = 1e-5
    J = np.empty((4, 3))
    for k in range(3):
        dq = np.zeros(3)
        dq[k] = h
        J[:, k] = (chart_embedding(E, q + dq, 1) - chart_embedding(E, q - dq, 1)) / (2 * h)
    G = metric_at(E, q, chart=1)
    assert np.allclose(G, J.T @ J, rtol=1e-8, atol=1e-8 * np.abs(G).max())


def test_metric_domain_error():
    with pytest.raises(DomainError):
        metric_at(round_sphere(), [0.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        metric_at(round_sphere(), [1.0, np.pi, 1.0])


def test_ricci_round_and_flat():
    rng = np.random.default_rng(1)
    S = round_sphere(1.0)
    x = random_points(S, 200, rng)
    v = random_unit_tangents(S, x, rng)
    assert np.allclose(ambient_ricci(S, x, v), 2.0, atol=1e-12)
    assert np.all(ambient_ricci(euclidean(), rng.normal(size=(5, 3)), [1.0, 0, 0]) == 0)


def test_ricci_equal_semiaxes_limit():
    E = ellipsoid(1, 1, 1, 1, strict=False)
    rng = np.random.default_rng(2)
    x = random_points(E, 100, rng)
    v = random_unit_tangents(E, x, rng)
    assert np.max(np.abs(ambient_ricci(E, x, v) - 2.0)) < 1e-10


def _ricci_by_sectional(space, x, v):
    """Independent oracle: sum of Gauss sectional curvatures over a frame."""
    D = 2.0 / np.asarray(space.semiaxes) ** 2
    n = unit_normal(space, x)
    g = np.linalg.norm(D * x)
    P = np.eye(4) - np.outer(n, n)
    h = P @ np.diag(D) @ P / g
    # orthonormal frame of the tangent space containing v
    basis = [v]
    for e in np.eye(4):
        w = e - np.dot(e, n) * n - sum(np.dot(e, b) * b for b in basis)
        if np.linalg.norm(w) > 1e-6 and len(basis) < 3:
            basis.append(w / np.linalg.norm(w))
    return sum(h @ v @ v * (h @ w @ w) - (h @ v @ w) ** 2 for w in basis[1:])


def test_ricci_matches_sectional_oracle():
    E = ellipsoid(2, 1.5, 1.2, 1)
    rng = np.random.default_rng(3)
    x = random_points(E, 50, rng)
    v = random_unit_tangents(E, x, rng)
    ric = ambient_ricci(E, x, v)
    ref = [_ricci_by_sectional(E, xi, vi) for xi, vi in zip(x, v)]
    assert np.allclose(ric, ref, rtol=1e-12, atol=1e-12)


def test_ricci_sign_flip_and_reflections():
    E = ellipsoid(2, 1.5, 1.2, 1)
    rng = np.random.default_rng(4)
    x = random_points(E, 100, rng)
    v = random_unit_tangents(E, x, rng)
    r = ambient_ricci(E, x, v)
    assert np.array_equal(r, ambient_ricci(E, x, -v))
    for i in range(4):
        S = np.ones(4)
        S[i] = -1
        assert np.allclose(ambient_ricci(E, x * S, v * S), r, rtol=1e-14, atol=1e-14)


def test_ricci_argument_errors():
    S = round_sphere()
    with pytest.raises(ValueError):
        ambient_ricci(S, [1.0, 0, 0, 0], [0, 2.0, 0, 0])
    with pytest.raises(ValueError):
        ambient_ricci(S, [1.0, 0, 0, 0], [1.0, 0, 0, 0])


def test_scalar_curvature_round():
    S = round_sphere(2.0)
    x = random_points(S, 10, np.random.default_rng(5))
    assert np.allclose(scalar_curvature(S, x), 6 / 4.0)


def test_exp_map_euclidean_and_antipode():
    p = np.array([0.1, 0.2, 0.3])
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(exp_map(euclidean(), p, v, 0.7), p + 0.7 * v)
    S = round_sphere()
    north = np.array([0, 0, 0, 1.0])
    rng = np.random.default_rng(6)
    for _ in range(5):
        v = project_tangent(S, north, rng.normal(size=4))
        v /= np.linalg.norm(v)
        assert np.allclose(exp_map(S, north, v, np.pi), -north, atol=1e-8)
        assert np.allclose(exp_map(S, north, v, np.pi, method="integrate"), -north, atol=1e-8)


def test_geodesic_speed_conserved_on_ellipsoid():
    E = ellipsoid(2, 1.5, 1.2, 1)
    rng = np.random.default_rng(7)
    x = random_points(E, 20, rng)
    u = 3.0 * random_unit_tangents(E, x, rng)
    xe, ue = integrate_geodesic(E, x, u, return_velocity=True)
    speed = np.linalg.norm(ue, axis=1)
    assert np.max(np.abs(speed / 3.0 - 1)) < 1e-8
    assert np.all(on_space(E, xe, tol=1e-8))


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.0, 2.0), t=st.floats(0.0, 2.0), seed=st.integers(0, 2**16))
def test_exp_composition_with_transport(s, t, seed):
    S = round_sphere(1.3)
    rng = np.random.default_rng(seed)
    p = random_points(S, 1, rng)[0]
    v = project_tangent(S, p, rng.normal(size=4))
    q = exp_map(S, p, v, s)
    w = parallel_transport_sphere(S, p, v, s)
    assert np.allclose(exp_map(S, p, v, s + t), exp_map(S, q, w, t), atol=1e-6)
    assert np.allclose(exp_map(S, p, v, s + t, method="integrate"),
                       exp_map(S, p, v, s + t), atol=1e-6)


def test_space_json_round_trip():
    for sp in SPACES:
        assert space_from_json(sp.to_json()) == sp
    assert space_from_json('{"kind": "sphere3", "radius": 2}') == round_sphere(2.0)
    with pytest.raises(ValueError):
        space_from_json({"kind": "torus"})
    with pytest.raises(ValueError):
        ellipsoid(1, 2, 3, 4)
