"""Axisymmetric mean curvature flow with neck surgery in R^3.

A component is a meridian polyline (x, r) from pole to pole, revolved about
the x-axis.  Its points move with velocity -H n (H = k1 + k2, outward normal
n), which for the profile curve reads

    X_t = X_ss - (n_r / r) n,

the second-derivative term taken implicitly (tridiagonal solve) and the
rotational term explicitly.  At the poles the rotational curvature equals
the meridian one, so the axial coordinate moves with twice the meridian
term and r stays zero.  Points are redistributed along a cubic spline in
arc length whenever the spacing drifts too far from c / (local curvature).

Surgery follows the usual scheme: once a strong delta-neck of radius
s = 1 / H_neck appears, the neck is cut and both sides are closed by a
standard convex cap; components that are convex (or capped tubes) with
H >= H_th everywhere are discarded and closed off by comparison with the
shrinking sphere of equal area.
"""

import json
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import cKDTree

from .surfaces import AxiProfile


class FlowError(RuntimeError):
    """Smooth step failed (mean convexity lost or profile pinched)."""


class CanonicalNeighborhoodError(RuntimeError):
    """Curvature reached H_trig with no delta-neck to cut."""

    def __init__(self, msg, dump=None):
        super().__init__(msg)
        self.dump = dump or {}


class CapError(ValueError):
    """Cap gluing broke mean convexity or the curvature-ratio bound."""


class NestingError(RuntimeError):
    """Foliation slices are not strictly nested."""


@dataclass
class FlowParams:
    """Parameters of the flow with surgery.

    ``spacing`` is the redistribution constant c (target spacing c / curvature,
    clipped to [h_min, h_max]); ``neck_window`` is the half-length of the
    neck test window in units of s (None means 1 / delta); ``gamma_cap`` is
    the distance of each cap tip from the neck centre and ``cap_length`` the
    axial length of a cap, both in units of s.
    """

    alpha: float = 0.2
    delta: float = 0.1
    H_th: float = 4.0
    H_neck: float = 40.0
    H_trig: float = 400.0
    dt_cfl: float = 0.005
    gamma_cap: float = 0.5
    cap_length: float = 1.0
    neck_window: float = None
    spacing: float = 0.05
    h_max: float = 0.05
    h_min: float = 1e-5
    eps_convex: float = 0.02
    eps_tube: float = 0.1
    store_motion: float = 2e-3
    max_steps: int = 200000

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.delta <= 0.1:
            raise ValueError("delta must lie in (0, 0.1]")
        if not (self.H_neck >= 10 * self.H_th and self.H_trig >= 10 * self.H_neck):
            raise ValueError("need H_trig >= 10 H_neck >= 100 H_th")
        if self.gamma_cap <= 0 or self.cap_length <= 0:
            raise ValueError("cap dimensions must be positive")

    @property
    def window(self):
        return 1.0 / self.delta if self.neck_window is None else self.neck_window

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ValueError("unknown flow parameters: %s" % sorted(extra))
        return cls(**obj)


# ----------------------------------------------------------------------------
# initial profiles

def sphere_profile(radius=1.0, h=0.02, center=0.0):
    n = max(int(np.ceil(np.pi * radius / h)), 8)
    th = np.linspace(np.pi, 0.0, n + 1)
    r = radius * np.sin(th)
    r[[0, -1]] = 0.0
    return AxiProfile(center + radius * np.cos(th), r)


def _resample_param(pts, h):
    """Resample a polyline (m, 2) from pole to pole at spacing ~h (linear)."""
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(np.ceil(s[-1] / h)), 8)
    t = np.linspace(0.0, s[-1], n + 1)
    return np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])


def dumbbell_profile(ball_radius=1.0, center_distance=4.0, neck_radius=0.05, h=0.01,
                     beta2=None, power=4):
    """Two balls joined by a neck r^2 = rho^2 + beta^2 x^2 + gamma |x|^power.

    With ``beta2=None`` the neck is the hyperbola (gamma = 0) tangent to both
    spheres.  Otherwise beta^2 is prescribed and gamma together with the
    tangency abscissa are solved for, giving a slender waist (r r'' = beta^2
    at the centre) that steepens towards the balls.  Either way the profile
    is C^1 and mean convex (checked).
    """
    R, c, rho = float(ball_radius), 0.5 * float(center_distance), float(neck_radius)
    if beta2 is None:
        beta2 = (R * R - rho * rho) / (c * c + rho * rho - R * R)
        if beta2 <= 0:
            raise ValueError("balls too far apart for a tangent hyperbolic neck")
        gamma, xt = 0.0, c / (1 + beta2)
    else:
        def gam(x):
            return (2 * (c - x) - 2 * beta2 * x) / (power * x ** (power - 1))

        def mismatch(x):
            return rho * rho + beta2 * x * x + gam(x) * x ** power - (R * R - (x - c) ** 2)

        grid = np.linspace(c - R + 1e-6, c - 1e-6, 4001)
        vals = mismatch(grid)
        k = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if len(k) == 0:
            raise ValueError("no tangent quartic neck for these parameters")
        xt = brentq(mismatch, grid[k[0]], grid[k[0] + 1])
        gamma = gam(xt)
    th_t = np.arccos((c - xt) / R)
    th = np.linspace(np.pi, th_t, 4001)
    left = np.column_stack([-c + R * np.cos(th), R * np.sin(th)])
    xs = np.linspace(-xt, xt, 8001)[1:-1]
    neck = np.column_stack([xs, np.sqrt(rho * rho + beta2 * xs ** 2 + gamma * np.abs(xs) ** power)])
    right = left[::-1] * np.array([-1.0, 1.0])
    pts = np.vstack([left, neck, right])
    pts[0, 1] = pts[-1, 1] = 0.0
    x, r = _resample_graded(pts, h, rho)
    prof = AxiProfile(x, r)
    if profile_curvatures(x, r)[2].min() <= 0:
        raise ValueError("dumbbell profile is not mean convex")
    return prof


def _resample_graded(pts, h, rho, c=0.1):
    """Arc-length resampling with spacing min(h, c r), floored at rho / 5."""
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    rmid = 0.5 * (pts[1:, 1] + pts[:-1, 1])
    hloc = np.minimum(h, np.maximum(c * rmid, 0.2 * rho))
    n_of = np.concatenate([[0.0], np.cumsum(seg / hloc)])
    n = max(int(np.ceil(n_of[-1])), 8)
    t = np.interp(np.linspace(0, n_of[-1], n + 1), n_of, s)
    x = np.interp(t, s, pts[:, 0])
    r = np.interp(t, s, pts[:, 1])
    r[[0, -1]] = 0.0
    return x, r


def capped_cylinder_profile(radius=0.5, length=10.0, h=0.02):
    """Cylinder of the given radius and total length closed by hemispheres."""
    a = 0.5 * length - radius
    if a <= 0:
        raise ValueError("length must exceed the diameter")
    th = np.linspace(np.pi, np.pi / 2, 400)
    left = np.column_stack([-a + radius * np.cos(th), radius * np.sin(th)])
    mid = np.column_stack([np.linspace(-a, a, 2000), np.full(2000, radius)])
    right = left[::-1] * np.array([-1.0, 1.0])
    pts = np.vstack([left, mid[1:-1], right])
    x, r = _resample_param(pts, h)
    r[[0, -1]] = 0.0
    return AxiProfile(x, r)


def profile_from_dict(eig):
    """Build an initial profile from a config dict (shape + dimensions)."""
    eig = dict(eig)
    shape = eig.pop("shape")
    builders = {"sphere": sphere_profile, "dumbbell": dumbbell_profile,
                "capped_cylinder": capped_cylinder_profile}
    if shape not in builders:
        raise ValueError("unknown initial shape %r" % shape)
    return builders[shape](**eig)


# ----------------------------------------------------------------------------
# curvature and geometry of profiles

def profile_curvatures(x, r):
    """Meridian and rotational curvature, H, tangent and outward normal."""
    p = AxiProfile(x, r, validate=False)
    km, kr = p.curvatures()
    P = np.column_stack([x, r])
    T = np.empty_like(P)
    T[1:-1] = P[2:] - P[:-2]
    T[0] = P[1] - P[0]
    T[-1] = P[-1] - P[-2]
    T /= np.linalg.norm(T, axis=1, keepdims=True)
    n = np.column_stack([-T[:, 1], T[:, 0]])
    return km, kr, km + kr, T, n


def curvature_ratio(x, r):
    """lambda_1 / H with lambda_1 = min(k_meridian, k_rotational)."""
    km, kr, H, _, _ = profile_curvatures(x, r)
    return np.minimum(km, kr) / H


def circumscribed_radius(profiles):
    """Radius of the smallest ball centred on the axis containing all profiles."""
    P = np.vstack([np.column_stack([p.x, p.r]) for p in profiles])

    def f(c):
        return np.max(np.hypot(P[:, 0] - c, P[:, 1]))

    res = minimize_scalar(f, bounds=(P[:, 0].min(), P[:, 0].max()), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x)


def _spline(x, r):
    """Arc-length cubic splines with ghost points (x even, r odd at the poles)."""
    seg = np.hypot(np.diff(x), np.diff(r))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    g = min(3, len(x) - 1)
    sg = np.concatenate([-s[g:0:-1], s, 2 * L - s[-2:-g - 2:-1]])
    xg = np.concatenate([x[g:0:-1], x, x[-2:-g - 2:-1]])
    rg = np.concatenate([-r[g:0:-1], r, -r[-2:-g - 2:-1]])
    return CubicSpline(sg, xg), CubicSpline(sg, rg), L


def target_spacing(x, r, params, scale=1.0):
    km, kr, H, _, _ = profile_curvatures(x, r)
    K = np.maximum(np.abs(km), np.abs(kr))
    return np.clip(scale * params.spacing / np.maximum(K, 1e-12), params.h_min, params.h_max)


def redistribute(x, r, params, scale=1.0):
    """Resample by arc length with spacing ~ c / curvature."""
    hv = target_spacing(x, r, params, scale)
    sx, sr, L = _spline(x, r)
    seg = np.hypot(np.diff(x), np.diff(r))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    hm = np.minimum(hv[1:], hv[:-1])
    n_of = np.concatenate([[0.0], np.cumsum(seg / hm)])
    n = max(int(np.ceil(n_of[-1])), 16)
    snew = np.interp(np.linspace(0, n_of[-1], n + 1), n_of, s)
    xn, rn = sx(snew), sr(snew)
    rn[[0, -1]] = 0.0
    return xn, rn


def _needs_redistribution(x, r, params):
    hv = target_spacing(x, r, params)
    seg = np.hypot(np.diff(x), np.diff(r))
    ratio = seg / np.minimum(hv[1:], hv[:-1])
    return ratio.max() > 1.6 or ratio.min() < 0.3


# ----------------------------------------------------------------------------
# one semi-implicit step

def flow_step(x, r, dt):
    """Advance one component by dt; returns new (x, r)."""
    N = len(x)
    h = np.hypot(np.diff(x), np.diff(r))
    _, kr, _, T, nrm = profile_curvatures(x, r)
    # explicit rotational term -(n_r / r) n at interior points
    Fx = np.zeros(N)
    Fr = np.zeros(N)
    Fx[1:-1] = -kr[1:-1] * nrm[1:-1, 0]
    Fr[1:-1] = -kr[1:-1] * nrm[1:-1, 1]
    lo = np.zeros(N)
    up = np.zeros(N)
    hl, hr = h[:-1], h[1:]
    a = 2.0 / (hl * (hl + hr))
    c = 2.0 / (hr * (hl + hr))
    diag = np.ones(N)
    diag[1:-1] += dt * (a + c)
    lo[1:-1] = -dt * a
    up[1:-1] = -dt * c
    # poles: x moves with twice the even-extension second difference
    dx = diag.copy()
    lx, ux = lo.copy(), up.copy()
    dx[0] = 1 + 4 * dt / h[0] ** 2
    ux[0] = -4 * dt / h[0] ** 2
    dx[-1] = 1 + 4 * dt / h[-1] ** 2
    lx[-1] = -4 * dt / h[-1] ** 2
    ab = np.zeros((3, N))
    ab[0, 1:] = ux[:-1]
    ab[1] = dx
    ab[2, :-1] = lx[1:]
    xn = solve_banded((1, 1), ab, x + dt * Fx)
    # r: Dirichlet zero at the poles
    ab = np.zeros((3, N))
    ab[0, 2:] = up[1:-1]
    ab[1] = diag
    ab[2, :-2] = lo[1:-1]
    rhs = r + dt * Fr
    rhs[[0, -1]] = 0.0
    rn = solve_banded((1, 1), ab, rhs)
    rn[[0, -1]] = 0.0
    return xn, rn


# ----------------------------------------------------------------------------
# Andrews condition

@dataclass
class AndrewsResult:
    passed: bool
    index: int = -1
    side: str = ""
    overlap: float = 0.0
    violations: tuple = ()


def andrews_check(profile, alpha, tol=1e-3, densify=4):
    """Check that interior and exterior balls of radius alpha / H avoid the surface.

    Each ball touches the surface at its sample p and is centred on the
    normal line through p.  Distances to the surface are computed in the
    meridian half-plane (a circle of the surface of revolution is nearest
    to a point at the same azimuth).
    """
    x, r = profile.x, profile.r
    if densify > 1:
        sx, sr, L = _spline(x, r)
        s = np.linspace(0, L, densify * (len(x) - 1) + 1)
        dxs, drs = sx(s), sr(s)
        drs[[0, -1]] = 0.0
    else:
        dxs, drs = x, r
    _, _, H, _, n = profile_curvatures(x, r)
    if np.any(H <= 0):
        raise ValueError("Andrews check needs H > 0")
    rad = alpha / H
    first, allbad = None, []
    for side, sign in (("interior", -1.0), ("exterior", 1.0)):
        cx = x + sign * rad * n[:, 0]
        cr = np.abs(r + sign * rad * n[:, 1])
        # distance from every ball centre to every dense surface sample
        d = np.hypot(cx[:, None] - dxs[None, :], cr[:, None] - drs[None, :]).min(axis=1)
        bad = d < rad * (1 - tol) - 1e-12
        if np.any(bad):
            allbad += [(int(i), side) for i in np.nonzero(bad)[0]]
            if first is None:
                i = int(np.argmax(bad))
                first = (i, side, float(rad[i] - d[i]))
    if first is None:
        return AndrewsResult(True)
    return AndrewsResult(False, *first, violations=tuple(allbad))


# ----------------------------------------------------------------------------
# necks

@dataclass
class Neck:
    index: int
    x: float
    r: float
    H: float
    quality: float
    flags: tuple = ()


def _graph_window(x, r, i, half):
    """Samples of the profile within |x - x_i| <= half, if x is monotone there."""
    lo = i
    while lo > 0 and x[i] - x[lo - 1] <= half:
        lo -= 1
    hi = i
    while hi < len(x) - 1 and x[hi + 1] - x[i] <= half:
        hi += 1
    xs, rs = x[lo:hi + 1], r[lo:hi + 1]
    if np.any(np.diff(xs) <= 0):
        return None
    if lo == 0 or hi == len(x) - 1:
        return None
    return xs, rs


def neck_quality(x, r, i, s, window):
    """C^2 distance of the rescaled profile near sample i to the unit cylinder."""
    win = _graph_window(x, r, i, window * s)
    if win is None or len(win[0]) < 5:
        return np.inf
    xs, rs = win
    cs = CubicSpline(xs, rs)
    d1 = cs(xs, 1)
    d2 = cs(xs, 2)
    return float(max(np.abs(rs / s - 1).max(), np.abs(d1).max(), s * np.abs(d2).max()))


def detect_necks(profile, delta, H_neck, window=None, history=None, t=None):
    """Strong delta-necks at scale s = 1 / H_neck.

    Spatial test: within |x - x_c| <= window * s the profile is delta-close in
    C^2 (after rescaling by s) to the cylinder of radius s.  Backward test:
    over the stored history [t - s^2, t] the neck radius follows the
    shrinking cylinder sqrt(r_c^2 + 2 (t - t_k)) within delta; if the history
    does not reach back s^2 the neck is flagged "spatial-only".
    Returns a maximal disjoint set, greedy by descending H (tie: smaller x).
    """
    x, r = profile.x, profile.r
    window = 1.0 / delta if window is None else window
    s = 1.0 / H_neck
    _, _, H, _, _ = profile_curvatures(x, r)
    cand = []
    for i in range(1, len(x) - 1):
        if not (r[i] <= r[i - 1] and r[i] <= r[i + 1]):
            continue
        if abs(r[i] / s - 1) > delta:
            continue
        q = neck_quality(x, r, i, s, window)
        if q > delta:
            continue
        flags = ()
        if history is not None and t is not None:
            ok, covered = _history_ok(history, t, x[i], r[i], s, window, delta)
            if not ok:
                continue
            if not covered:
                flags = ("spatial-only",)
        else:
            flags = ("spatial-only",)
        cand.append(Neck(i, float(x[i]), float(r[i]), float(H[i]), q, flags))
    cand.sort(key=lambda nk: (-nk.H, nk.x))
    chosen = []
    for nk in cand:
        if all(abs(nk.x - c.x) > 2 * window * s for c in chosen):
            chosen.append(nk)
    return chosen


def _history_ok(history, t, xc, rc, s, window, delta):
    covered = False
    for tk, xk, rk in history:
        if tk < t - s * s:
            covered = True
            continue
        sel = np.abs(xk - xc) <= window * s
        if not np.any(sel):
            return False, False
        rmin = rk[sel].min()
        expect = np.sqrt(rc * rc + 2 * (t - tk))
        if abs(rmin / expect - 1) > delta:
            return False, covered
    return True, covered


# ----------------------------------------------------------------------------
# cap replacement

def standard_cap(r0, dr0, ddr0, length, h):
    """Convex cap glued C^2 to a profile with r, r', r'' = (r0, dr0, ddr0).

    r(v) = (r0 + dr0 v + ddr0 v^2 / 2) sqrt(1 - (v / length)^3), 0 <= v <= length;
    the square-root factor is 1 + O(v^3) at the gluing circle and gives a
    smooth round pole at v = length.  Sampled with spacing ~h, refined
    towards the pole.
    """
    n = max(int(np.ceil(length / h)), 12)
    u = np.linspace(0.0, 1.0, n + 1)
    # cluster samples near the pole where r ~ sqrt(length - v)
    v = length * (1 - (1 - u) ** 2)
    r = (r0 + dr0 * v + 0.5 * ddr0 * v * v) * np.sqrt(np.clip(1 - (v / length) ** 3, 0, None))
    r[-1] = 0.0
    return v, r


def replace_neck(profile, neck, params, h=None):
    """Cut at the neck and close both sides with standard caps.

    Returns the two new profiles (left, right) and a diagnostics dict.
    """
    x, r = profile.x, profile.r
    s = 1.0 / params.H_neck
    off = (params.gamma_cap + params.cap_length) * s
    L = params.cap_length * s
    h = params.spacing * s if h is None else h
    win = _graph_window(x, r, neck.index, off + 4 * h + s)
    if win is None:
        raise CapError("neck region is not a graph over the axis")
    cs = CubicSpline(*win)
    pieces = []
    for side in (-1, 1):
        xg = neck.x + side * off
        r0, d1, d2 = float(cs(xg)), float(cs(xg, 1)), float(cs(xg, 2))
        # cap coordinate v runs from the gluing circle towards the neck centre
        v, rc = standard_cap(r0, -side * d1, d2, L, h)
        xc = xg - side * v
        if side < 0:
            keep = x < xg
            px = np.concatenate([x[keep], xc])
            pr = np.concatenate([r[keep], rc])
        else:
            keep = x > xg
            px = np.concatenate([xc[::-1], x[keep]])
            pr = np.concatenate([rc[::-1], r[keep]])
        pieces.append((px, pr))
    pre_ratio = curvature_ratio(x, r).min()
    pre_Hmin = profile_curvatures(x, r)[2].min()
    out, diag = [], {"pre_min_ratio": float(pre_ratio), "pre_min_H": float(pre_Hmin)}
    for k, (px, pr) in enumerate(pieces):
        prof = AxiProfile(px, pr)
        _, _, H, _, _ = profile_curvatures(px, pr)
        ratio = curvature_ratio(px, pr)
        if H.min() <= 0:
            raise CapError("cap breaks mean convexity (gamma_cap too small?)")
        if H.min() < pre_Hmin - 1e-9 * abs(pre_Hmin):
            raise CapError("surgery decreased min H")
        near = np.abs(px - neck.x) <= off + 2 * h
        if np.any(near) and ratio[near].min() < pre_ratio - params.delta:
            raise CapError("cap curvature ratio below pre-surgery minimum minus delta")
        diag["post_min_H_%d" % k] = float(H.min())
        out.append(prof)
    diag["area_drop"] = float(profile.area() - out[0].area() - out[1].area())
    return out[0], out[1], diag


# ----------------------------------------------------------------------------
# classification

def classify_component(profile, params):
    """'convex', 'capped_eps_tube' or 'thick'.

    Discard eligibility needs H >= H_th everywhere; below that the
    component is 'thick'.  Capped tube (tested first, since a capped
    cylinder is also convex): a core at least four radii long on which r is
    within eps_tube of its median, with r monotone on both end pieces.
    Convex: lambda_1 / H >= -eps_convex.
    """
    x, r = profile.x, profile.r
    km, kr, H, _, _ = profile_curvatures(x, r)
    if H.min() < params.H_th:
        return "thick"
    rm = np.median(r[len(r) // 4: 3 * len(r) // 4])
    core = np.abs(r / rm - 1) <= params.eps_tube
    if core.any():
        idx = np.nonzero(core)[0]
        i0, i1 = idx[0], idx[-1]
        if np.all(core[i0:i1 + 1]) and x[i1] - x[i0] >= 4 * rm:
            if np.all(np.diff(r[:i0 + 1]) >= 0) and np.all(np.diff(r[i1:]) <= 0):
                return "capped_eps_tube"
    if (np.minimum(km, kr) / H).min() >= -params.eps_convex:
        return "convex"
    return "thick"


# ----------------------------------------------------------------------------
# run loop

@dataclass
class SurgeryEvent:
    time: float
    kind: str
    component: int
    neck_center: float = None
    neck_radius: float = None
    H_center: float = None
    pre_area: float = None
    post_area: float = None
    children: tuple = ()
    flags: tuple = ()

    def to_json(self):
        out = {}
        for k, v in asdict(self).items():
            if v is None or (isinstance(v, tuple) and not v):
                continue
            if isinstance(v, tuple):
                v = [int(u) if isinstance(u, (int, np.integer)) else u for u in v]
            elif isinstance(v, (float, np.floating)):
                v = round(float(v), 12)
            elif isinstance(v, np.integer):
                v = int(v)
            out[k] = v
        return out


@dataclass
class Component:
    id: int
    x: np.ndarray
    r: np.ndarray
    parent: int = None
    born: float = 0.0
    discarded: float = None
    extinct: float = None
    history: deque = field(default_factory=deque)

    @property
    def profile(self):
        return AxiProfile(self.x, self.r, validate=False)


@dataclass
class FlowState:
    time: float
    components: list
    surgery_log: list
    extinct: bool = False


@dataclass
class RunResult:
    final: FlowState
    events: list
    frames: list
    components: dict
    extinction_time: float
    circumscribed_bound: float
    steps: int
    min_H_trace: list

    def event_log(self):
        """JSON-lines event log (deterministic formatting)."""
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.events)


def _store(frames, t, comps, tag=None):
    frames.append({"t": float(t), "tag": tag,
                   "parts": [(c.id, c.x.copy(), c.r.copy()) for c in comps]})


def run_with_surgery(initial, params, t_max=np.inf, record=True):
    """Flow one or more profiles with surgery until every component is gone.

    ``initial`` is an AxiProfile or a list of disjoint AxiProfiles.
    """
    profiles = initial if isinstance(initial, (list, tuple)) else [initial]
    bound_R, _ = circumscribed_radius(profiles)
    comps = []
    for k, p in enumerate(profiles):
        x, r = redistribute(p.x, p.r, params)
        comps.append(Component(k, x, r))
    all_comps = {c.id: c for c in comps}
    events, frames, trace = [], [], []
    t = 0.0
    if record:
        _store(frames, t, comps, "initial")
    last_store_t = 0.0
    s = 1.0 / params.H_neck
    steps = 0
    while comps:
        Hs = [profile_curvatures(c.x, c.r)[2] for c in comps]
        Hmax = max(H.max() for H in Hs)
        Hmin = min(H.min() for H in Hs)
        trace.append((t, float(Hmin)))
        if Hmin <= 0:
            raise FlowError("mean convexity lost at t = %.6g" % t)
        # discards
        keep = []
        for c, H in zip(comps, Hs):
            kind = classify_component(c.profile, params)
            if kind in ("convex", "capped_eps_tube"):
                A = c.profile.area()
                c.discarded = t
                c.extinct = t + A / (16 * np.pi)
                events.append(SurgeryEvent(t, "discard_" + ("convex" if kind == "convex"
                                                            else "capped_tube"),
                                           c.id, pre_area=A))
            else:
                keep.append(c)
        if len(keep) != len(comps):
            comps = keep
            if record:
                _store(frames, t, comps, "discard")
                last_store_t = t
            continue
        # surgeries
        did = False
        new = []
        for c in comps:
            necks = detect_necks(c.profile, params.delta, params.H_neck, params.window,
                                 c.history, t)
            if not necks:
                new.append(c)
                continue
            did = True
            pre = c.profile
            parts = [pre]
            for nk in sorted(necks, key=lambda n: -n.x):
                left, right, diag = replace_neck(parts[0], nk, params)
                parts = [left, right] + parts[1:]
            kids = []
            for p in parts:
                cid = len(all_comps)
                kid = Component(cid, p.x.copy(), p.r.copy(), parent=c.id, born=t)
                all_comps[cid] = kid
                kids.append(kid)
            c.discarded = t
            for nk in necks:
                events.append(SurgeryEvent(t, "cap_replacement", c.id, neck_center=nk.x,
                                           neck_radius=s, H_center=nk.H,
                                           pre_area=pre.area(),
                                           post_area=sum(k.profile.area() for k in kids),
                                           children=tuple(k.id for k in kids),
                                           flags=nk.flags))
            new.extend(kids)
        if did:
            if record:
                frames.append({"t": float(t), "tag": "surgery",
                               "parts": [(c.id, c.x.copy(), c.r.copy()) for c in comps],
                               "post": [(c.id, c.x.copy(), c.r.copy()) for c in new]})
                last_store_t = t
            comps = new
            continue
        if Hmax >= params.H_trig:
            raise CanonicalNeighborhoodError(
                "H reached %.4g >= H_trig with no delta-neck at t = %.6g" % (Hmax, t),
                dump={"t": t, "profiles": [(c.x.tolist(), c.r.tolist()) for c in comps]})
        if t >= t_max or steps >= params.max_steps:
            break
        dt = params.dt_cfl / Hmax ** 2
        for c in comps:
            c.history.append((t, c.x.copy(), c.r.copy()))
            while c.history and c.history[0][0] < t - 4 * s * s:
                c.history.popleft()
            xn, rn = flow_step(c.x, c.r, dt)
            if np.any(rn[1:-1] <= 0) or np.any(~np.isfinite(xn)):
                raise FlowError("profile pinched without surgery at t = %.6g" % t)
            if _needs_redistribution(xn, rn, params):
                xn, rn = redistribute(xn, rn, params)
            c.x, c.r = xn, rn
        t += dt
        steps += 1
        if record and (t - last_store_t) * Hmin >= params.store_motion:
            _store(frames, t, comps)
            last_store_t = t
    T = max((c.extinct for c in all_comps.values() if c.extinct is not None), default=t)
    final = FlowState(t, comps, events, extinct=not comps)
    return RunResult(final, events, frames, all_comps, float(T), bound_R ** 2 / 4, steps, trace)


# ----------------------------------------------------------------------------
# foliation

def _seg_dist(P, A, B, tree=None, k=12):
    """Distance from each point of P (n, 2) to the segments A -> B (m, 2).

    With a KD-tree over the segment starts only the segments at the k
    nearest starts (and their predecessors) are examined.
    """
    d = B - A
    L2 = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    if tree is None:
        idx = np.broadcast_to(np.arange(len(A)), (len(P), len(A)))
    else:
        _, nb = tree.query(P, k=min(k, len(A)))
        idx = np.concatenate([nb, np.maximum(nb - 1, 0)], axis=1)
    Ai, di = A[idx], d[idx]
    t = np.clip(np.einsum("nmj,nmj->nm", P[:, None, :] - Ai, di) / L2[idx], 0.0, 1.0)
    C = Ai + t[..., None] * di
    return np.sqrt(((P[:, None, :] - C) ** 2).sum(-1)).min(axis=1)


class _Leaf:
    """Signed distance to a union of x-monotone profiles (negative inside)."""

    def __init__(self, parts):
        self.parts = [(np.asarray(x), np.asarray(r)) for x, r in parts]
        for x, r in self.parts:
            if np.any(np.diff(x) <= 0):
                raise NestingError("foliation interpolation needs x-monotone profiles")
        self.A = np.vstack([np.column_stack([x[:-1], r[:-1]]) for x, r in self.parts])
        self.B = np.vstack([np.column_stack([x[1:], r[1:]]) for x, r in self.parts])
        self.tree = cKDTree(self.A)

    def radius(self, x):
        R = np.zeros_like(x, dtype=float)
        for px, pr in self.parts:
            inside = (x >= px[0]) & (x <= px[-1])
            R[inside] = np.maximum(R[inside], np.interp(x[inside], px, pr))
        return R

    def phi(self, x, r):
        x, r = np.broadcast_arrays(np.asarray(x, float), np.asarray(r, float))
        d = _seg_dist(np.column_stack([x.ravel(), r.ravel()]), self.A, self.B,
                      self.tree).reshape(x.shape)
        return np.where(np.abs(r) < self.radius(x), -d, d)


def _bisect(f, lo, hi, iters=48):
    """Vectorised bisection for f(lo) < 0 <= f(hi)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = f(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def interpolate_leaves(pre, post, lambdas, n_axis=4000, n_x=400):
    """Leaves {(1 - lam) phi_pre + lam phi_post < 0} between two nested leaves.

    phi_post > phi_pre pointwise when post lies strictly inside pre, so the
    leaves are strictly nested; a neck of ``pre`` absent from ``post`` closes
    down to the axis and the leaf splits.  Each leaf is returned as a list
    of (x, r) profiles.
    """
    P, Q = _Leaf(pre), _Leaf(post)
    x0 = min(x[0] for x, _ in P.parts)
    x1 = max(x[-1] for x, _ in P.parts)
    ax = np.linspace(x0, x1, n_axis)
    ax = np.unique(np.concatenate([ax] + [x for x, _ in P.parts] + [x for x, _ in Q.parts]))
    ax = ax[(ax >= x0) & (ax <= x1)]
    phiP0, phiQ0 = P.phi(ax, 0 * ax), Q.phi(ax, 0 * ax)
    leaves = []
    for lam in lambdas:
        val = (1 - lam) * phiP0 + lam * phiQ0
        neg = val < 0
        edges = np.diff(neg.astype(int))
        starts = list(np.nonzero(edges == 1)[0])
        ends = list(np.nonzero(edges == -1)[0])
        if neg[0] or neg[-1]:
            raise NestingError("interpolated leaf reaches the end of the axis window")

        def f_axis(x):
            return (1 - lam) * P.phi(x, 0 * x) + lam * Q.phi(x, 0 * x)

        parts = []
        for i, j in zip(starts, ends):
            a = _bisect(lambda x: -f_axis(x), np.array([ax[i]]), np.array([ax[i + 1]]))[0]
            b = _bisect(f_axis, np.array([ax[j]]), np.array([ax[j + 1]]))[0]
            u = 0.5 * (1 - np.cos(np.pi * np.linspace(0, 1, n_x + 1)))
            xs = a + (b - a) * u
            xs = np.unique(np.concatenate([xs, [x for px, _ in P.parts for x in px if a < x < b]]))
            inner = xs[1:-1]
            top = P.radius(inner) + 1e-9

            def f_r(rr, xx=inner):
                return (1 - lam) * P.phi(xx, rr) + lam * Q.phi(xx, rr)

            rr = _bisect(f_r, np.zeros_like(inner), top)
            parts.append((xs, np.concatenate([[0.0], rr, [0.0]])))
        leaves.append(parts)
    return leaves


def _homothety(x, r, lam):
    """Shrink a convex profile towards its volume centroid by factor 1 - lam."""
    w = np.diff(x) * (r[1:] ** 2 + r[1:] * r[:-1] + r[:-1] ** 2)
    xm = 0.5 * (x[1:] + x[:-1])
    c = float(np.sum(w * xm) / np.sum(w))
    return c + (1 - lam) * (x - c), (1 - lam) * r, c


@dataclass
class FoliationSlices:
    """Strictly nested family of leaves reparametrised to [0, 1].

    ``leaves[k]`` is a list of (x, r) component profiles at parameter
    ``times[k]``; ``skeleton`` lists the axis points each component shrinks
    to, ``spacing`` the mean sample spacing at which they were closed off,
    and ``leaf_skeleton[k]`` the skeleton points of the shrinking
    components present in leaf k.
    """

    times: np.ndarray
    leaves: list
    areas: np.ndarray
    skeleton: list
    spacing: float
    tags: list = field(default_factory=list)
    leaf_skeleton: list = field(default_factory=list)

    def region(self, k):
        from shapely.geometry import Polygon
        from shapely.ops import unary_union
        polys = [Polygon(AxiProfile(x, r, validate=False).polygon()) for x, r in self.leaves[k]]
        return unary_union(polys)

    def check_pair(self, i, j):
        """True if leaf j (later) lies strictly inside leaf i with smaller area."""
        if not self.times[j] > self.times[i]:
            return False
        a, b = self.region(i), self.region(j)
        strict = a.contains(b) and a.boundary.distance(b.boundary) > 0
        return bool(strict and self.areas[j] < self.areas[i])

    def verify(self, n_pairs=1000, seed=0, consecutive=True):
        """Nesting/area certificate over random pairs (and all consecutive pairs)."""
        rng = np.random.default_rng(seed)
        n = len(self.leaves)
        regions = [self.region(k) for k in range(n)]
        bnd = [g.boundary for g in regions]

        def ok(i, j):
            return (regions[i].contains(regions[j]) and bnd[i].distance(bnd[j]) > 0
                    and self.areas[j] < self.areas[i] and self.times[j] > self.times[i])

        pairs = []
        while len(pairs) < n_pairs:
            i, j = sorted(rng.choice(n, 2, replace=False))
            pairs.append((int(i), int(j)))
        bad = [(i, j) for i, j in pairs if not ok(i, j)]
        bad_c = [(i, i + 1) for i in range(n - 1) if not ok(i, i + 1)] if consecutive else []
        return {"pairs": len(pairs), "failures": bad, "consecutive_failures": bad_c,
                "passed": not bad and not bad_c}

    def skeleton_distance(self, k=-1):
        """Hausdorff distance (meridian plane) from leaf k to its skeleton points."""
        from shapely.geometry import MultiPoint
        pts = self.leaf_skeleton[k] if self.leaf_skeleton else self.skeleton
        sk = MultiPoint([(c, 0.0) for c in pts])
        return float(self.region(k).boundary.hausdorff_distance(sk))

    def to_csv(self, path, every=1):
        with open(path, "w") as fh:
            fh.write("leaf,t,component,x,r\n")
            for k in range(0, len(self.leaves), every):
                for c, (x, r) in enumerate(self.leaves[k]):
                    for xi, ri in zip(x, r):
                        fh.write("%d,%.12g,%d,%.12g,%.12g\n" % (k, self.times[k], c, xi, ri))


def _leaf_area(parts):
    return sum(AxiProfile(x, r, validate=False).area() for x, r in parts)


def extract_foliation(run, n_interp=12, n_final=24):
    """Assemble the nested family from a completed run.

    Flow frames give the smooth part; across each surgery the leaves are
    signed-distance interpolants from the pre-surgery leaf to the next stored
    leaf (neck closing); discarded components shrink homothetically to
    their centroid until their closing time.
    """
    if not run.final.extinct:
        raise ValueError("run did not reach extinction")
    comps = run.components
    disc = {cid: c for cid, c in comps.items() if c.extinct is not None}
    centres = {cid: _homothety(c.x, c.r, 0.0)[2] for cid, c in disc.items()}
    T = run.extinction_time

    def discarded_parts(t):
        out = []
        for cid, c in disc.items():
            if c.discarded <= t < c.extinct:
                lam = (t - c.discarded) / (c.extinct - c.discarded)
                if lam > 0:
                    x, r, _ = _homothety(c.x, c.r, lam)
                    out.append((cid, x, r))
        return out

    def skeleton_of(t):
        out = []
        for cid, c in disc.items():
            if c.discarded < t < c.extinct:
                out.append(centres[cid])
        return out

    seq = []
    frames = run.frames
    for k, fr in enumerate(frames):
        live = [(cid, x, r) for cid, x, r in fr["parts"]]
        parts = live + [p for p in discarded_parts(fr["t"]) if p[0] not in {q[0] for q in live}]
        seq.append((fr["t"], [(x, r) for _, x, r in parts], fr["tag"] or "flow"))
        if fr["tag"] == "surgery":
            nxt = next(f for f in frames[k + 1:] if f["t"] > fr["t"])
            nparts = [(x, r) for _, x, r in nxt["parts"]] + \
                [(x, r) for cid, x, r in discarded_parts(nxt["t"])
                 if cid not in {q[0] for q in nxt["parts"]}]
            lams = np.linspace(0, 1, n_interp + 2)[1:-1]
            for lam, leaf in zip(lams, interpolate_leaves(seq[-1][1], nparts, lams)):
                seq.append((fr["t"] + lam * (nxt["t"] - fr["t"]), leaf, "neck-closing"))
    t_last = seq[-1][0]
    for q in range(1, n_final + 1):
        t = T - (T - t_last) * 2.0 ** (-q)
        seq.append((t, [(x, r) for _, x, r in discarded_parts(t)], "shrink"))
    # drop empty and duplicate-time leaves, keeping the last of equal times
    clean = []
    for t, parts, tag in seq:
        if not parts:
            continue
        if clean and t <= clean[-1][0]:
            clean[-1] = (clean[-1][0], parts, tag) if tag == "surgery" else clean[-1]
            continue
        clean.append((t, parts, tag))
    times = np.array([t / T for t, _, _ in clean])
    leaves = [p for _, p, _ in clean]
    areas = np.array([_leaf_area(p) for p in leaves])
    spacing = float(np.mean([np.mean(np.hypot(np.diff(c.x), np.diff(c.r))) for c in disc.values()]))
    return FoliationSlices(times, leaves, areas, [centres[c] for c in sorted(disc)], spacing,
                           [tag for _, _, tag in clean], [skeleton_of(t) for t, _, _ in clean])


# ----------------------------------------------------------------------------
# golden configurations

GOLDEN_SPHERE = {"initial": {"shape": "sphere", "radius": 1.0}, "params": {}}

# The neck of the golden dumbbell is slender at the waist (r r'' = 0.03) and
# steepens like |x|^6 into the balls, so that it becomes a strong delta-neck
# before pinching and the stubs left by the cut retract instead of pinching.
GOLDEN_DUMBBELL = {
    "initial": {"shape": "dumbbell", "ball_radius": 1.0, "center_distance": 4.0,
                "neck_radius": 0.05, "beta2": 0.03, "power": 6},
    "params": {"neck_window": 3.0, "dt_cfl": 0.01},
}


def run_config(cfg, record=True):
    """Run a config dict {"initial": profile dict, "params": FlowParams fields}."""
    params = FlowParams.from_json(cfg.get("params", {}))
    return run_with_surgery(profile_from_dict(cfg["initial"]), params, record=record), params
