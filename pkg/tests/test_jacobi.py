import numpy as np
import pytest

from minsphere.ambient import ellipsoid, euclidean, round_sphere
from minsphere.jacobi import (
    NotMinimalError, assemble, band_area, count_below, cylinder_ricci_lower_bound,
    index_lower_bound_phiAB, phi_AB, rayleigh_quotient, reflection_parity, spectrum,
)
from minsphere.surfaces import (
    area, ellipse_perimeter, great_sphere, normal_graph, planar_sphere, round_sphere_mesh,
)

S3 = round_sphere(1.0)


@pytest.fixture(scope="module")
def gs_op():
    return assemble(great_sphere(5), S3)


@pytest.fixture(scope="module")
def gs_eig(gs_op):
    return spectrum(gs_op)


def test_stiffness_symmetric_psd_constant_kernel(gs_op):
    K = gs_op.stiffness
    assert abs(K - K.T).max() < 1e-12
    assert np.abs(K @ np.ones(K.shape[0])).max() < 1e-10
    rng = np.random.default_rng(0)
    f = rng.normal(size=K.shape[0])
    assert f @ (K @ f) > 0


def test_great_sphere_potential(gs_op):
    assert np.max(np.abs(gs_op.potential + 2.0)) < 1e-8
    assert gs_op.A2.max() == 0.0


def test_great_sphere_spectrum(gs_eig):
    ev = gs_eig.eigenvalues
    expected = [-2, 0, 0, 0, 4, 4, 4, 4, 4]
    assert abs(ev[0] + 2) < 0.02
    assert np.all(np.abs(ev[1:4]) < 0.02)
    assert np.all(np.abs(ev[4:9] / 4 - 1) < 0.01)
    assert gs_eig.index == 1 and gs_eig.nullity == 3
    assert gs_eig.residual <= 1e-9
    assert gs_eig.lowest_signed
    assert len(ev) >= len(expected)


def test_eigenfunctions_mass_orthonormal(gs_op, gs_eig):
    V = gs_eig.eigenfunctions
    G = V.T @ (gs_op.mass[:, None] * V)
    assert np.allclose(G, np.eye(V.shape[1]), atol=1e-8)


def test_rayleigh_quotient(gs_op, gs_eig):
    assert rayleigh_quotient(gs_op, np.ones(gs_op.surface.n_vertices)) == pytest.approx(-2.0, abs=1e-10)
    f0 = gs_eig.eigenfunctions[:, 0]
    assert abs(rayleigh_quotient(gs_op, f0) - gs_eig.eigenvalues[0]) < 1e-8
    with pytest.raises(ValueError):
        rayleigh_quotient(gs_op, np.zeros(gs_op.surface.n_vertices))


def test_zero_tol_halving_stable(gs_op, gs_eig):
    tol = gs_eig.zero_tol
    for t in (tol, tol / 2, tol / 4):
        assert count_below(gs_op, t) == gs_eig.index + gs_eig.nullity


def test_spectrum_converges_under_refinement():
    # l = 2 eigenvalue 4 approached at second order
    errs = []
    for level in (3, 4, 5):
        ev = spectrum(assemble(great_sphere(level), S3), k=9).eigenvalues
        errs.append(abs(ev[4] - 4.0))
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_second_variation_taylor_law(gs_eig):
    s = great_sphere(5)
    phi = gs_eig.eigenfunctions[:, 0]
    lam = gs_eig.eigenvalues[0]
    ts = np.linspace(0.0, 0.05, 6)
    areas = np.array([area(normal_graph(s, S3, t * phi)) for t in ts])
    # |Sigma_t| = |Sigma| + (lam / 2) t^2 int phi^2 + O(t^4); phi is mass-normalised
    coef = np.polyfit(ts ** 2, areas, 1)[0]
    assert abs(coef / (lam / 2) - 1) < 0.05


def test_nearly_round_first_planar_sphere():
    E = ellipsoid(1.05, 1.02, 1.01, 1)
    op = assemble(planar_sphere(E, 1, 0.03), E)
    eig = spectrum(op)
    assert eig.index == 1 and eig.nullity == 0
    assert op.A2.max() < 1e-10


def test_flat_ambient_round_sphere_and_scaling():
    vals = []
    for r in (1.0, 2.0, 3.0):
        s = round_sphere_mesh(4, r)
        op = assemble(s, euclidean(), waive_minimal=True)
        assert np.allclose(op.ricci, 0.0)
        assert np.allclose(op.potential, -op.A2)
        assert np.allclose(op.A2, 2 / r ** 2, rtol=1e-2)
        vals.append(spectrum(op, k=6).eigenvalues)
    assert vals[0][0] == pytest.approx(-2.0, rel=1e-2)
    for r, v in zip((2.0, 3.0), vals[1:]):
        assert np.allclose(v * r ** 2, vals[0], rtol=1e-10, atol=1e-10)


def test_not_minimal_rejected():
    E = ellipsoid(2, 1.5, 1.2, 1)
    s = normal_graph(planar_sphere(E, 2, 0.2), E, 0.1)
    with pytest.raises(NotMinimalError):
        assemble(s, E)


def test_planar_spheres_totally_geodesic_and_parity():
    E = ellipsoid(4, 3, 2, 1)
    for i in range(1, 5):
        op = assemble(planar_sphere(E, i, 0.15), E)
        assert op.A2.max() <= 1e-10
    s = planar_sphere(E, 1, 0.1, axis=0)
    op = assemble(s, E)
    eig = spectrum(op, k=6)
    # x4 -> -x4 preserves the ring mesh around the x2 axis
    for j in range(6):
        # the zipper triangulation is only approximately symmetric
        assert reflection_parity(s, eig.eigenfunctions[:, j], 3, tol=1e-2) != 0
    assert reflection_parity(s, op.potential, 3) == 1


def test_phi_AB_shape_and_disjoint_supports():
    x = np.linspace(-20, 20, 40001)
    f = phi_AB(x, -1.0, 2.0)
    assert f[np.searchsorted(x, -2.0)] == 0 and f[np.searchsorted(x, 0.0)] == 1
    assert phi_AB(-1.5, -1.0, 2.0) == pytest.approx(0.5)
    N = 3.4
    supports = [phi_AB(x, A, B) > 0 for A, B in ((-4 * N, -2 * N), (-N, N), (2 * N, 4 * N))]
    for i in range(3):
        for j in range(i + 1, 3):
            assert not np.any(supports[i] & supports[j])


def test_cylinder_ricci_bound():
    # Gauss curvature of the (b, c, d) ellipsoid along its equator, minimal at the x4 axis
    mu = cylinder_ricci_lower_bound(1.5, 1.2, 1.0)
    assert mu == pytest.approx(1.0 ** 2 / (1.5 ** 2 * 1.2 ** 2), rel=1e-6)


def test_band_area_on_long_planar_sphere():
    E = ellipsoid(64, 1.5, 1.2, 1)
    s = planar_sphere(E, 2, 0.15, axis=0)
    x1 = np.abs(s.vertices[:, 0])
    # unit-width strip of a nearly cylindrical region has area ~ perimeter
    strip = band_area(s, x1, 3.0, 4.0)
    assert strip == pytest.approx(2 * ellipse_perimeter(1.2, 1.0), rel=5e-3)


@pytest.mark.slow
def test_index_growth_sweep():
    rep = index_lower_bound_phiAB((1.5, 1.2, 1.0), [2, 4, 8, 16, 32])
    idx = [r["index"] for r in rep["rows"]]
    assert all(b >= a for a, b in zip(idx, idx[1:])) and idx[-1] >= 3
    last = rep["rows"][-1]["quotients"]
    assert all(q is not None and q < 0 for q in last)
    assert max(r["max_A2"] for r in rep["rows"]) < 1e-10
    # each quotient stays negative and settles as a grows
    q2 = [r["quotients"][1] for r in rep["rows"]]
    assert all(q < 0 for q in q2)
    assert abs(q2[-1] - q2[-2]) < abs(q2[-2] - q2[-3])
