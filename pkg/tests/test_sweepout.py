import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minsphere import ambient, surfaces, sweepout
from minsphere.sweepout import (
    CatenoidError, TwoParamConfig, build_two_param, catenoid_modify, lambda_area,
    log_cutoff_energy, neck_area, retracted_area,
)

FOUR_PI = 4 * np.pi


@pytest.mark.parametrize("tau", [0.1, 0.05])
def test_log_cutoff_energy(tau):
    measured, exact = log_cutoff_energy(tau)
    assert exact == pytest.approx(2 * np.pi / np.log(1 / tau))
    assert abs(measured / exact - 1) < 0.03


def test_log_cutoff_values():
    tau = 0.1
    assert sweepout.log_cutoff(0.0, tau) == 0.0
    assert sweepout.log_cutoff(tau ** 2, tau) == pytest.approx(0.0)
    assert sweepout.log_cutoff(tau ** 1.5, tau) == pytest.approx(0.5)
    assert sweepout.log_cutoff(2 * tau, tau) == 1.0


def test_round_foliation_closed_form(s3_fol):
    fol = s3_fol
    assert abs(fol.center_area / FOUR_PI - 1) < 1e-3
    for t in (-0.9, -0.3, 0.0, 0.2, 0.7):
        closed = FOUR_PI * np.sin(0.5 * np.pi * (1 - abs(t))) ** 2
        mesh = surfaces.area(fol.slice(t))
        assert mesh / fol.center_area == pytest.approx(closed / FOUR_PI, rel=1e-12)
    # the slices are geodesic spheres about the poles of the x4-axis
    sl = fol.slice(0.4).vertices
    centre = np.array([0, 0, 0, 1.0])
    d = np.arccos(np.clip(sl @ centre, -1, 1))
    assert np.ptp(d) < 1e-12


def test_quadratic_law_matches_eigenvalue(s3_fol):
    fol = s3_fol
    assert fol.index == 1
    assert fol.lam == pytest.approx(-2.0, rel=1e-2)
    assert abs(fol.slide_coeff / (fol.lam / 2) - 1) < 0.05
    # global constant: sin(pi t / 2) >= t on [0, 1]
    assert fol.C == pytest.approx(fol.center_area, rel=1e-9)


def test_foliation_properties(s3_fol):
    rep = s3_fol.check(100)
    assert rep["passed"]
    assert np.linalg.norm(s3_fol.alpha(0.3) - s3_fol.beta(0.3)) > 1.0
    assert s3_fol.diameter(0.999) < 1e-2


def test_ellipsoid_slices_decrease():
    b, c, d = 1.5, 1.2, 1.0
    fol = sweepout.build_optimal_foliation(ambient.ellipsoid(3.0, b, c, d), h=0.05,
                                           with_spectrum=False)
    ts = np.linspace(0, 0.95, 8)
    mesh = np.array([surfaces.area(fol.slice(t)) for t in ts])
    assert np.all(np.diff(mesh) < 0)
    assert np.allclose(mesh, [surfaces.area(fol.slice(-t)) for t in ts], rtol=1e-12)
    # independent oracle: adaptive quadrature of the scaled ellipsoid (b, c, d) sqrt(1 - t^2)
    for t, m in zip(ts[::3], mesh[::3]):
        g = np.sqrt(1 - t * t)
        quad = surfaces.ellipsoid_area((g * b, g * c, g * d), method="quadrature")
        assert abs(m / quad - 1) < 3e-3


def test_config_invariants(s3_fol, s3_cfg):
    cfg = s3_cfg
    assert cfg.eps <= min(cfg.mu / 2, cfg.b1(cfg.C * cfg.mu ** 2 / 8)) * (1 + 1e-9)
    assert cfg.neck_fn(0.3, 0.3) == 1.0
    for s in np.linspace(-1 + 2 * cfg.eps, 1, 11):
        assert cfg.neck_fn(s, -1.0) == 0.0
        assert cfg.neck_fn(1.0, -s) == 0.0
    with pytest.raises(ValueError):
        TwoParamConfig(mu=0.2, eps=1.0, eps_bound=cfg.eps_bound)
    with pytest.raises(ValueError):
        TwoParamConfig(mu=1.5)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(-1, 1), t=st.floats(-1, 1))
def test_neck_fn_range(s3_cfg, s, t):
    v = s3_cfg.neck_fn(s, t)
    assert 0.0 <= v <= 1.0


@pytest.fixture(scope="module")
def s3_fam(s3_fol, s3_cfg):
    return build_two_param(s3_fol, s3_cfg)


@pytest.fixture(scope="module")
def s3_mod(s3_fam):
    return catenoid_modify(s3_fam)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(-1, 1), d=st.floats(0, 1))
def test_area_symmetric(s3_mod, s, d):
    # bias samples towards the diagonal band where all regions meet
    t = max(-1.0, s - d * d * 0.05)
    assert s3_mod.area(s, t) == s3_mod.area(t, s)


def test_diagonal_degenerates(s3_fol, s3_cfg, s3_fam, s3_mod):
    fam, mod = s3_fam, s3_mod
    for s in (-0.5, 0.0, 0.1, 0.6):
        assert fam.area(s, s) == 0.0
        assert mod.area(s, s) == pytest.approx(0.0, abs=1e-12)
        near = [fam.area(s, s - k * s3_cfg.eps) for k in (0.5, 0.1, 0.01)]
        assert near[0] > near[1] > near[2] and near[2] < 1e-2 * s3_fol.center_area


def test_boundary_loop_is_foliation(s3_fol, s3_cfg, s3_mod):
    fam = s3_mod
    ss = np.linspace(-1 + 2 * s3_cfg.eps, 1, 23)
    assert np.allclose(fam.boundary_loop(ss), s3_fol.area(ss), rtol=0, atol=1e-12)


def test_region_continuity(s3_cfg, s3_mod):
    e, mu, tr = s3_cfg.eps, s3_cfg.mu, s3_cfg.transition
    h = 1e-9
    pairs = []
    for s in (-0.5, -0.1, 0.0, 0.05, 0.1, 0.5):
        # edge of the diagonal band
        pairs.append(((s, s - e + h), (s, s - e - h)))
    for s in (-0.1, 0.0, 0.05, 0.1):
        # switch from opening to retraction inside the catenoid window
        pairs.append(((s, s - e / 2 + h), (s, s - e / 2 - h)))
    for s in (mu, -mu, mu + tr, -mu - tr):
        for d in (0.2 * e, 0.6 * e):
            pairs.append(((s - h, s - h - d), (s + h, s + h - d)))
    for p, q in pairs:
        assert abs(s3_mod.area(*p) - s3_mod.area(*q)) < 1e-6


def test_excision_monotone(s3_fol):
    phis = np.linspace(0.0, 1.0, 41)
    a = [retracted_area(s3_fol, 0.2, p) for p in phis]
    assert np.all(np.diff(a) < 0)
    assert a[0] == pytest.approx(s3_fol.area(0.2))
    assert a[-1] == pytest.approx(0.0, abs=1e-12)


def test_collar_limit_matches_neck(s3_fol):
    # a closing graph neck tends to the straight collar
    wall = neck_area(s3_fol, 0.1, -0.1, 0.5, 0.5)
    near = [neck_area(s3_fol, 0.1, -0.1, 0.5, 0.5 * (1 + x)) for x in (1e-2, 1e-3, 1e-4)]
    gaps = np.abs(np.array(near) - wall)
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 2e-4
    # first order in the log-ratio of the radii
    assert np.allclose(gaps / np.array([1e-2, 1e-3, 1e-4]), gaps[-1] / 1e-4, rtol=0.05)
    # collar of the great-sphere family: loop of radius rho swept between levels
    rho = 0.5
    exact = 2 * np.pi * np.sin(rho) * 2 * np.sin(0.5 * np.pi * 0.1)
    coll = sweepout.collar_area(s3_fol, -0.1, 0.1, rho / s3_fol.D0)
    assert coll == pytest.approx(exact, rel=5e-3)


def test_off_diagonal_bound(s3_fol, s3_cfg, s3_fam):
    res = s3_fam.sample(11)
    two = 2 * s3_fol.center_area
    C, e = s3_cfg.C, s3_cfg.eps
    off = [a for s, t, a, region in res["values"] if region == "off-diagonal"]
    assert max(off) <= two - C * e * e / 8


def test_tau_to_zero_closes_neck(s3_fol, s3_cfg):
    e = s3_cfg.eps
    pair = s3_fol.area(0.0) + s3_fol.area(-e)
    gaps = [abs(lambda_area(s3_fol, 0.0, e, tau) - pair) for tau in (0.05, 0.01, 1e-3, 1e-5)]
    assert np.all(np.diff(gaps) < 0)
    assert lambda_area(s3_fol, 0.0, e, 0.0) == pytest.approx(pair, abs=1e-12)


def test_round_width_report(s3_width):
    est = s3_width
    assert abs(est.omega1_upper / FOUR_PI - 1) < 1e-3
    assert est.omega2_upper < 2 * FOUR_PI
    assert est.margin > 0
    cat = est.details["modified_regions"]["catenoid"]
    assert cat["sup"] < 2 * FOUR_PI and cat["margin"] > 0
    cfg = est.details["config"]
    assert cat["margin"] >= 0.5 * cfg["C"] * min(cfg["eps"], cfg["tau_bar"]) ** 2
    js = est.to_json()
    assert set(js) >= {"omega1_upper", "omega2_upper", "margin", "families", "details"}


def test_unmodified_sup_tends_to_twice_center(s3_fol):
    sups = sweepout.unmodified_limit(s3_fol, [0.08, 0.04, 0.02, 0.01])
    assert np.all(np.diff(sups) > 0)
    assert np.all(sups < 2 * s3_fol.center_area)
    assert sups[-1] >= 2 * FOUR_PI - 0.05


def test_catenoid_error_reports_both_quantities():
    # on a long ellipsoid the neck at tau_bar = 0.05 costs more than the quadratic saving
    fol = sweepout.build_optimal_foliation(ambient.ellipsoid(6.0, 1.5, 1.2, 1.0), h=0.1,
                                           with_spectrum=False)
    cfg = sweepout.make_config(fol)
    fam = build_two_param(fol, cfg)
    with pytest.raises(CatenoidError) as err:
        catenoid_modify(fam)
    assert err.value.neck_cost > err.value.saving > 0
    mod = catenoid_modify(fam, strict=False)
    assert not mod.certified


def test_round_neck_always_saves(s3_fol):
    for tb in (0.05, 0.5, 0.9):
        mod = catenoid_modify(build_two_param(s3_fol, sweepout.make_config(s3_fol, tau_bar=tb)))
        assert mod.certified and mod.neck_cost < mod.saving


def test_crossover_bisection():
    res = sweepout.crossover((1.5, 1.2, 1.0))
    assert res["monotone"]
    a = res["a_star"]
    assert res["gamma2_at"] / (2 * res["gamma1"]) == pytest.approx(1.0, rel=1e-6)
    g2 = surfaces.planar_sphere_area((a * (1 - 1e-5), 1.5, 1.2, 1.0), 2)
    assert g2 < 2 * res["gamma1"]
    assert surfaces.planar_sphere_area((1.0, 1.0, 1.0, 1.0), 1) == pytest.approx(FOUR_PI, rel=1e-12)


def test_yau_witness():
    w = sweepout.yau_witness((1.5, 1.2, 1.0), [3.0, 3.5, 4.0])
    assert w["a"] == 3.5
    assert w["certified"]
    assert w["omega2_upper"] < 2 * w["gamma1"] < w["gamma2"]


def test_degeneration_table(degeneration_rows):
    rows = degeneration_rows
    g1 = [r["gamma1"] for r in rows]
    assert np.ptp(g1) == 0.0
    norm = np.array([r["normalized"] for r in rows])
    assert np.all(np.diff(norm) > 0) and norm[-1] > 0.9
    for r in rows:
        assert np.all(np.array(r["linear_ratio"]) <= 1 + 1e-12)
    per_len = np.array([r["gamma2_over_a"] for r in rows])
    assert np.all(np.diff(np.abs(np.diff(per_len))) < 0)
    assert rows[0]["certified"]


def test_area_csv(tmp_path, s3_fam):
    p = tmp_path / "area.csv"
    s3_fam.to_csv(p, n=5)
    lines = p.read_text().splitlines()
    assert lines[0] == "s,t,area" and len(lines) == 26
