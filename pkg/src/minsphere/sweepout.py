"""Sweep-outs of three-spheres: optimal foliations, two-parameter families, width bounds.

A foliation here is a map F(p, t) from the centre sphere times [-1, 1]
into the ambient space whose slices are homothetic copies of the centre
(geodesic spheres in the round three-sphere, x1-slices of an ellipsoid).
Excised discs, their boundary loops and the necks joining two slices are
all measured on the centre mesh and pushed forward by F.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from . import ambient, jacobi, meshes, surfaces
from .surfaces import TriSurface

_GL_U, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_U = 0.5 * (_GL_U + 1.0)
_GL_W = 0.5 * _GL_W


class WidthError(RuntimeError):
    """A width bound could not be certified (non-positive margin)."""


class CatenoidError(WidthError):
    """The neck opened by the catenoid modification costs more than the quadratic saving."""

    def __init__(self, msg, saving, neck_cost):
        super().__init__(msg)
        self.saving = saving
        self.neck_cost = neck_cost


# ----------------------------------------------------------------------------
# closed-form outer foliations


class RoundSlices:
    """Geodesic spheres about (0, 0, 0, +-R): F(p, t) = (cos th p, R sin th), th = pi t / 2."""

    name = "geodesic-spheres"

    def __init__(self, radius=1.0):
        self.R = float(radius)

    def scale(self, t):
        return np.cos(0.5 * np.pi * np.asarray(t, dtype=float))

    def embed(self, P, t):
        th = 0.5 * np.pi * np.asarray(t, dtype=float)
        out = np.array(P, dtype=float) * np.cos(th)[..., None] if np.ndim(th) else P * np.cos(th)
        out[..., 3] = self.R * np.sin(th)
        return out

    def velocity(self, P, t):
        th = 0.5 * np.pi * np.asarray(t, dtype=float)
        out = -0.5 * np.pi * np.sin(th)[..., None] * P if np.ndim(th) else -0.5 * np.pi * np.sin(th) * P
        out = np.array(out, dtype=float)
        out[..., 3] = 0.5 * np.pi * self.R * np.cos(th)
        return out

    def level(self, X):
        """Slice parameter of points on the slices."""
        return 2.0 / np.pi * np.arcsin(np.clip(X[..., 3] / self.R, -1.0, 1.0))

    def to_json(self):
        return {"kind": self.name, "radius": self.R}


class EllipsoidSlices:
    """x1-slices of E(a,b,c,d): F(p, t) = (a t, sqrt(1 - t^2) p) with p on Gamma_1."""

    name = "x1-slices"

    def __init__(self, a):
        self.a = float(a)

    def scale(self, t):
        return np.sqrt(np.maximum(1.0 - np.asarray(t, dtype=float) ** 2, 0.0))

    def embed(self, P, t):
        t = np.asarray(t, dtype=float)
        g = self.scale(t)
        out = np.array(P, dtype=float) * (g[..., None] if np.ndim(t) else g)
        out[..., 0] = self.a * t
        return out

    def velocity(self, P, t):
        t = np.asarray(t, dtype=float)
        g = np.maximum(self.scale(t), 1e-12)
        f = -t / g
        out = np.array(P, dtype=float) * (f[..., None] if np.ndim(t) else f)
        out[..., 0] = self.a
        return out

    def level(self, X):
        return X[..., 0] / self.a

    def to_json(self):
        return {"kind": self.name, "a": self.a}


# ----------------------------------------------------------------------------
# level sets of the distance on the centre mesh


class _LevelSets:
    """Vectorised level segments of a piecewise-linear distance on a mesh."""

    def __init__(self, s, dist):
        self.s = s
        self.dist = dist
        t = s.triangles
        v = s.vertices
        self.P = v[t]
        self.d = dist[t]
        self.dmin = self.d.min(axis=1)
        self.dmax = self.d.max(axis=1)
        e1 = self.P[:, 1] - self.P[:, 0]
        e2 = self.P[:, 2] - self.P[:, 0]
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        b1 = self.d[:, 1] - self.d[:, 0]
        b2 = self.d[:, 2] - self.d[:, 0]
        c1 = (g22 * b1 - g12 * b2) / det
        c2 = (g11 * b2 - g12 * b1) / det
        grad = c1[:, None] * e1 + c2[:, None] * e2
        # conormal scaled by 1/|grad d|: the speed of the level curves per unit of d
        self.grad = grad / np.maximum(np.einsum("ij,ij->i", grad, grad), 1e-300)[:, None]
        self.face_areas = s.face_areas()

    def segments(self, rho):
        """Midpoints, chord vectors and level-curve velocities d q / d rho of {dist = rho}."""
        f = np.nonzero((self.dmin < rho) & (self.dmax >= rho))[0]
        if len(f) == 0:
            z = np.zeros((0, self.P.shape[2]))
            return z, z, z
        d = self.d[f]
        P = self.P[f]
        pts = []
        for k in range(3):
            j = (k + 1) % 3
            da, db = d[:, k], d[:, j]
            cross = (da < rho) != (db < rho)
            w = np.where(cross, (rho - da) / np.where(cross, db - da, 1.0), 0.0)
            pts.append((cross, P[:, k] + w[:, None] * (P[:, j] - P[:, k])))
        # each crossing face has exactly two crossing edges
        c = np.stack([p[0] for p in pts], axis=1)
        X = np.stack([p[1] for p in pts], axis=1)
        first = np.argmax(c, axis=1)
        last = 2 - np.argmax(c[:, ::-1], axis=1)
        rows = np.arange(len(f))
        A = X[rows, first]
        B = X[rows, last]
        return 0.5 * (A + B), B - A, self.grad[f]

    def disc_area(self, rho):
        """Area of {dist < rho} by exact clipping of the linear interpolant."""
        if rho <= 0:
            return 0.0
        sel = self.dmin < rho
        return float(np.sum(self.face_areas[sel] * surfaces._clip_fractions(self.d[sel], rho)))


# ----------------------------------------------------------------------------
# optimal foliation


@dataclass
class OptimalFoliation:
    """Optimal foliation of a three-sphere about an index-one minimal centre.

    Attributes
    ----------
    slices : map (p, t) -> point with homothetic slices (scale g(t)).
    center : mesh of the centre sphere, marked at alpha(0).
    center_area : mesh area of the centre.
    lam : lowest eigenvalue of the stability operator on the centre (or None).
    index : Morse index of the centre (or None).
    c_quad : fitted constant in |S_t| = |S_0| - c_quad t^2 near t = 0.
    C : global constant with |S_t| <= |S_0| - C t^2 on [-1, 1].
    speed : L2 norm of the normal speed of the slices at t = 0.
    slide_coeff : -c_quad / speed^2, the quadratic coefficient in the
        unit-L2 normal parameter (equals lam / 2 for an eigenfunction slide).
    dist : intrinsic distance on the centre from alpha(0).
    """

    space: object
    slices: object
    center: TriSurface
    center_area: float
    lam: float
    index: int
    c_quad: float
    C: float
    speed: float
    slide_coeff: float
    dist: np.ndarray = field(repr=False)
    antipode: int = 0
    levels: object = field(default=None, repr=False)

    @property
    def D0(self):
        return float(self.dist.max())

    def scale(self, t):
        return self.slices.scale(t)

    def area(self, t):
        """Slice area |S_t| = g(t)^2 |S_0| (exact for the homothetic slices)."""
        return self.center_area * self.scale(t) ** 2

    def slice(self, t):
        return self.center.with_vertices(self.slices.embed(self.center.vertices, float(t)))

    def alpha(self, t):
        """Marked curve through the centre of the excised discs."""
        return self.slices.embed(self.center.vertices[self.center.marked], float(t))

    def beta(self, t):
        """Second marked curve (farthest point of each slice from alpha)."""
        return self.slices.embed(self.center.vertices[self.antipode], float(t))

    def diameter(self, t):
        v = self.slice(t).vertices
        return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))

    def check(self, n_pairs=200, seed=0):
        """Sampled foliation properties: area below the centre, disjoint slices, point limits."""
        rng = np.random.default_rng(seed)
        ts = rng.uniform(-1.0, 1.0, size=(n_pairs, 2))
        below = bool(np.all(self.area(ts[ts != 0]) < self.center_area))
        disjoint = True
        for t1, t2 in ts[:min(n_pairs, 50)]:
            l1 = self.slices.level(self.slice(t1).vertices)
            l2 = self.slices.level(self.slice(t2).vertices)
            gap = abs(np.median(l1) - np.median(l2))
            spread = max(np.ptp(l1), np.ptp(l2))
            disjoint &= bool(gap > 10 * spread)
        d = [self.diameter(t) for t in (-1 + 1e-3, 1 - 1e-3)]
        return {"area_below_center": below, "disjoint": disjoint,
                "end_diameters": d, "passed": below and disjoint and max(d) < 0.1 * self.diameter(0)}

    def to_json(self):
        return {"slices": self.slices.to_json(), "center_area": self.center_area,
                "lambda": self.lam, "index": self.index, "c_quad": self.c_quad, "C": self.C,
                "speed": self.speed, "slide_coeff": self.slide_coeff, "D0": self.D0,
                "vertices": int(self.center.n_vertices),
                "triangles": int(len(self.center.triangles))}


def _center_mesh(space, h, grade_min, m_pole):
    if space.kind == ambient.SPHERE3:
        R = space.radius
        v, t = meshes.ring_mesh((R, R, R), h, axis=2, grade_min=grade_min, m_pole=m_pole)
        return TriSurface(surfaces._lift(v, 3), t, marked=0), RoundSlices(R)
    if space.kind == ambient.ELLIPSOID4:
        s = surfaces.planar_sphere(space, 1, h, grade_min=grade_min, m_pole=m_pole)
        return s, EllipsoidSlices(space.semiaxes[0])
    raise ValueError("no closed-form outer foliation for ambient kind %r" % space.kind)


def build_optimal_foliation(space, center=None, slices=None, h=0.05, grade_min=2e-4,
                            m_pole=48, with_spectrum=True, fit_halfwidth=0.05):
    """Optimal foliation of the round three-sphere or of an ellipsoid.

    Parameters
    ----------
    space : AmbientSpace (round three-sphere or four-axis ellipsoid).
    center : optional centre mesh; defaults to the great sphere {x4 = 0}
        or Gamma_1, graded towards the marked vertex.
    slices : optional map with ``scale``, ``embed``, ``velocity`` and
        ``level``; defaults to the closed-form family of the space.
    with_spectrum : verify index one and record the lowest eigenvalue.
    fit_halfwidth : half-width of the t-window of the quadratic fit.
    """
    default_center, default_slices = _center_mesh(space, h, grade_min, m_pole)
    center = default_center if center is None else center
    slices = default_slices if slices is None else slices
    if center.marked is None:
        raise ValueError("centre mesh needs a marked vertex")
    A0 = surfaces.area(center, space)
    lam = index = None
    if with_spectrum:
        op = jacobi.assemble(center, space)
        sp = jacobi.spectrum(op, k=6)
        lam, index = float(sp.eigenvalues[0]), int(sp.index)
        if index != 1:
            raise ValueError("centre has index %d, expected an index-one minimal sphere" % index)
    # quadratic law from slice meshes
    ts = np.linspace(-fit_halfwidth, fit_halfwidth, 21)
    areas = np.array([surfaces.area(center.with_vertices(slices.embed(center.vertices, t)))
                      for t in ts])
    coef = np.polynomial.polynomial.polyfit(ts, areas, 4)
    c_quad = float(-coef[2])
    tt = np.linspace(1e-3, 1.0, 2000)
    C = float(np.min((A0 - A0 * slices.scale(np.concatenate([tt, -tt])) ** 2)
                     / np.concatenate([tt, tt]) ** 2))
    nu = surfaces.vertex_normals(center, space)
    w = np.einsum("ij,ij->i", slices.velocity(center.vertices, 0.0), nu)
    _, m = jacobi.cotan_stiffness(center)
    speed = float(np.sqrt(np.sum(m * w * w)))
    dist = surfaces.geodesic_distance(center)
    fol = OptimalFoliation(space, slices, center, A0, lam, index, c_quad, C, speed,
                           -c_quad / speed ** 2, dist, int(np.argmax(dist)))
    fol.levels = _LevelSets(center, dist)
    return fol


# ----------------------------------------------------------------------------
# two-parameter families


def neck_area(fol, hi, lo, rho_in, rho_out):
    """Area of two slices joined through the loops about alpha.

    The lower slice S_lo keeps {dist >= rho_in}; the upper sheet is the
    graph t = lo + (hi - lo) u over rho_in <= dist <= rho_out with
    dist = rho_in (rho_out / rho_in)^u, and S_hi beyond rho_out.
    ``rho_in == rho_out`` gives the straight annulus swept by one loop,
    which is the limit of the graph as the neck closes.
    """
    D0 = fol.D0
    rho_in = min(max(rho_in, 0.0), D0)
    rho_out = min(max(rho_out, rho_in), D0)
    lv = fol.levels
    A0 = fol.center_area
    g_lo, g_hi = fol.scale(lo), fol.scale(hi)
    total = g_lo ** 2 * (A0 - lv.disc_area(rho_in)) + g_hi ** 2 * (A0 - lv.disc_area(rho_out))
    if rho_in <= 0.0 or rho_in >= D0 or hi == lo and rho_in == rho_out:
        return float(total)
    logR = np.log(rho_out / rho_in)
    sl = fol.slices
    if logR == 0.0:
        P, dq, _ = lv.segments(rho_in)
        if len(P) == 0:
            return float(total)
        T = lo + (hi - lo) * _GL_U
        acc = 0.0
        for Tj, wj in zip(T, _GL_W):
            a = sl.velocity(P, Tj) * (hi - lo)
            b = sl.scale(Tj) * dq
            acc += wj * _wedge(a, b).sum()
        return float(total + acc)
    acc = 0.0
    for uj, wj in zip(_GL_U, _GL_W):
        r = rho_in * np.exp(uj * logR)
        P, dq, n = lv.segments(r)
        if len(P) == 0:
            continue
        T = lo + (hi - lo) * uj
        g = sl.scale(T)
        a = g * r * logR * n + (hi - lo) * sl.velocity(P, T)
        acc += wj * _wedge(a, g * dq).sum()
    return float(total + acc)


def _wedge(a, b):
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    return np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))


def collar_area(fol, s, t, phi):
    """|C(s, t, phi)|: annulus swept by the excision loop at phi D0 between s and t."""
    lo, hi = min(s, t), max(s, t)
    rho = phi * fol.D0
    base = fol.area(lo) + fol.area(hi) - (fol.scale(lo) ** 2 + fol.scale(hi) ** 2) \
        * fol.levels.disc_area(rho)
    return neck_area(fol, hi, lo, rho, rho) - float(base)


def retracted_area(fol, t, phi):
    """|R(S_t', phi)|: the slice with the disc of radius phi D0 about alpha removed."""
    return float(fol.scale(t) ** 2 * (fol.center_area - fol.levels.disc_area(phi * fol.D0)))


class _CollarTable:
    """Cumulative collar areas Q(phi_i, t) for measuring the moduli b1 and b2."""

    def __init__(self, fol, n_phi=48, n_t=801):
        self.phi = np.linspace(0.0, 1.0, n_phi + 2)[1:-1]
        self.t = np.linspace(-1.0, 1.0, n_t)
        sl = fol.slices
        K = np.zeros((len(self.phi), n_t))
        for i, ph in enumerate(self.phi):
            P, dq, _ = fol.levels.segments(ph * fol.D0)
            for j, tj in enumerate(self.t):
                K[i, j] = _wedge(sl.velocity(P, tj), sl.scale(tj) * dq).sum()
        dt = np.diff(self.t)
        self.Q = np.concatenate([np.zeros((len(self.phi), 1)),
                                 np.cumsum(0.5 * (K[:, 1:] + K[:, :-1]) * dt, axis=1)], axis=1)

    def max_collar(self, b):
        """max over phi and s of |C(s, s + b, phi)|."""
        if b <= 0:
            return 0.0
        hi = np.clip(self.t + b, -1.0, 1.0)
        Qhi = np.array([np.interp(hi, self.t, q) for q in self.Q])
        return float(np.max(Qhi - self.Q))


def measure_b1(table, a):
    """Largest b with |C(s, t, phi)| < a whenever |s - t| <= b."""
    if table.max_collar(2.0) < a:
        return 2.0
    return float(bisect(lambda b: table.max_collar(b) - a, 0.0, 2.0, xtol=1e-12, rtol=1e-10))


def measure_b2(fol, a):
    """Largest phi0 with |C(-1, 1, phi)| < a for all phi < phi0."""
    phis = np.linspace(0.0, 1.0, 201)[1:-1]
    vals = np.array([collar_area(fol, -1.0, 1.0, p) for p in phis])
    over = np.nonzero(vals >= a)[0]
    if len(over) == 0:
        return 1.0
    k = over[0]
    lo = phis[k - 1] if k > 0 else 0.0
    return float(bisect(lambda p: collar_area(fol, -1.0, 1.0, p) - a, lo, phis[k],
                        xtol=1e-12, rtol=1e-10))


@dataclass
class TwoParamConfig:
    """Parameters of the two-parameter family.

    eps : half-width of the diagonal band D_eps (measured by default).
    mu : half-width of the catenoid window B_{eps,mu}.
    tau_bar : largest logarithmic cutoff scale.
    C : quadratic constant of the foliation.
    b1, b2 : measured continuity moduli (callables).
    transition : width of the blend region beyond |s| = mu.
    """

    mu: float = 0.2
    eps: float = None
    tau_bar: float = 0.05
    C: float = None
    b1: object = field(default=None, repr=False)
    b2: object = field(default=None, repr=False)
    eps_bound: float = None
    phi_out_max: float = None
    transition: float = None

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if not 0 < self.tau_bar < 1:
            raise ValueError("tau_bar must lie in (0, 1)")
        if self.eps is not None and self.eps_bound is not None \
                and not 0 < self.eps <= self.eps_bound * (1 + 1e-12):
            raise ValueError("eps = %.6g violates eps <= min(mu/2, b1(C mu^2/8)) = %.6g"
                             % (self.eps, self.eps_bound))
        if self.transition is None:
            self.transition = 0.5 * self.mu

    def neck_fn(self, s, t):
        """phi(s, t): 1 on the diagonal, linear to 0 on the edge of D_eps, small outside."""
        d = abs(s - t)
        if d <= self.eps:
            return 1.0 - d / self.eps
        w = min(1.0, (d - self.eps) / self.eps)
        return self.phi_out_max * w * (1.0 - s * s) * (1.0 - t * t)

    def to_json(self):
        return {"mu": self.mu, "eps": self.eps, "tau_bar": self.tau_bar, "C": self.C,
                "eps_bound": self.eps_bound, "phi_out_max": self.phi_out_max,
                "transition": self.transition}


def make_config(fol, mu=0.2, tau_bar=0.05, eps=None, table=None):
    """Measure b1 and b2 on the foliation and set eps = min(mu/2, b1(C mu^2/8))."""
    table = _CollarTable(fol) if table is None else table
    C = fol.C
    bound = min(mu / 2, measure_b1(table, C * mu * mu / 8))
    cfg = TwoParamConfig(mu=mu, eps=bound if eps is None else float(eps), tau_bar=tau_bar, C=C,
                         b1=lambda a: measure_b1(table, a), b2=lambda a: measure_b2(fol, a),
                         eps_bound=bound)
    cfg.phi_out_max = 0.5 * measure_b2(fol, C * cfg.eps ** 2 / 8)
    return cfg


@dataclass
class SweepFamily:
    """Area function A(s, t) of a symmetric two-parameter family of spheres."""

    fol: OptimalFoliation
    cfg: TwoParamConfig
    modified: bool = False

    def surface(self, s, t):
        """Parameters (hi, lo, rho_in, rho_out, region) of the surface at (s, t)."""
        hi, lo = (s, t) if s >= t else (t, s)
        eps, mu = self.cfg.eps, self.cfg.mu
        D0 = self.fol.D0
        d = hi - lo
        phi = self.cfg.neck_fn(hi, lo)
        plain = (hi, lo, phi * D0, phi * D0)
        if d > eps:
            return plain + ("off-diagonal",)
        if not self.modified or abs(hi) >= mu + self.cfg.transition:
            return plain + ("diagonal",)
        cat = self._catenoid(hi, d)
        if abs(hi) <= mu:
            return cat + ("catenoid",)
        w = (abs(hi) - mu) / self.cfg.transition
        return ((hi, (1 - w) * cat[1] + w * lo, (1 - w) * cat[2] + w * plain[2],
                 (1 - w) * cat[3] + w * plain[3], "transition"))

    def _catenoid(self, s, d):
        eps, tb, D0 = self.cfg.eps, self.cfg.tau_bar, self.fol.D0
        if d >= 0.5 * eps:
            tau = 2.0 * tb * (eps - d) / eps
            return (s, s - eps, tau * tau, tau)
        kappa = (0.5 * eps - d) / (0.5 * eps)
        lam = (D0 / tb ** 2) ** kappa
        return (s, s - eps, min(lam * tb * tb, D0), min(lam * tb, D0))

    def area(self, s, t):
        hi, lo, r_in, r_out, _ = self.surface(s, t)
        return neck_area(self.fol, hi, lo, r_in, r_out)

    def band_points(self, n_s=41, n_d=13):
        """Parameter samples concentrated on D_eps (the only region near 2|S_0|)."""
        eps, mu, tr = self.cfg.eps, self.cfg.mu, self.cfg.transition
        hs = np.concatenate([np.linspace(-1, 1, n_s), np.linspace(-mu - tr, mu + tr, n_s),
                             eps * np.linspace(-2, 2, 17), [mu, -mu]])
        hs = np.unique(np.round(hs, 14))
        ds = eps * np.concatenate([np.linspace(0, 1, n_d), 1 + np.linspace(0, 1, 5)[1:]])
        pts = [(h, h - d) for h in hs for d in ds if -1 <= h - d]
        return pts

    def sample(self, n_grid=21, n_s=41, n_d=13):
        """Evaluate A on a regular grid and on the diagonal band; report sups by region."""
        grid = np.linspace(-1, 1, n_grid)
        pts = [(s, t) for s in grid for t in grid if s >= t] + self.band_points(n_s, n_d)
        best = {}
        values = []
        for s, t in pts:
            hi, lo, r_in, r_out, region = self.surface(s, t)
            a = neck_area(self.fol, hi, lo, r_in, r_out)
            values.append((s, t, a, region))
            if region not in best or a > best[region][0]:
                best[region] = (a, s, t)
        sup = max(v[2] for v in values)
        arg = max(values, key=lambda v: v[2])
        two = 2 * self.fol.center_area
        return {"sup": sup, "argmax": (arg[0], arg[1]), "margin": two - sup,
                "regions": {k: {"sup": v[0], "argmax": [v[1], v[2]], "margin": two - v[0]}
                            for k, v in sorted(best.items())},
                "n_samples": len(values), "values": values}

    def boundary_loop(self, ss):
        """Areas along t = -1 (the family restricted to this loop is the foliation)."""
        return np.array([self.area(s, -1.0) for s in ss])

    def to_csv(self, path, n=41):
        g = np.linspace(-1, 1, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "area"])
            for s in g:
                for t in g:
                    w.writerow(["%.10g" % s, "%.10g" % t, "%.12g" % self.area(s, t)])


def build_two_param(fol, cfg):
    """The family Gamma'_{s,t}: retracted slices joined by the swept collar."""
    if cfg.eps is None or cfg.phi_out_max is None:
        raise ValueError("configuration is not measured; use make_config")
    return SweepFamily(fol, cfg, modified=False)


def lambda_area(fol, s, eps, tau):
    """|Lambda_{s,tau}|: S_{s-eps} and S_s joined by the logarithmic neck of scale tau."""
    return neck_area(fol, s, s - eps, tau * tau, tau)


def catenoid_modify(family, cfg=None, n_s=21, strict=True):
    """Replace the family on B_{eps,mu} by logarithmic necks and blend back outside.

    Raises CatenoidError when a sampled neck surface reaches 2|S_0|
    (unless ``strict`` is False, in which case the family is returned
    with ``certified`` set to False).
    """
    cfg = family.cfg if cfg is None else cfg
    fol = family.fol
    mod = SweepFamily(fol, cfg, modified=True)
    two = 2 * fol.center_area
    ss = np.linspace(-cfg.mu, cfg.mu, n_s)
    pair = np.array([fol.area(s) + fol.area(s - cfg.eps) for s in ss])
    lam = np.array([lambda_area(fol, s, cfg.eps, cfg.tau_bar) for s in ss])
    saving = float(np.min(two - pair))
    cost = float(np.max(lam - pair))
    mod.certified = bool(np.max(lam) < two)
    if strict and not mod.certified:
        raise CatenoidError("neck cost %.3g exceeds quadratic saving %.3g (eps=%.3g, tau_bar=%.3g)"
                            % (cost, saving, cfg.eps, cfg.tau_bar), saving, cost)
    mod.saving, mod.neck_cost = saving, cost
    return mod


# ----------------------------------------------------------------------------
# reports


def log_cutoff(r, tau):
    """eta_tau: 0 inside tau^2, log(r / tau^2) / log(1 / tau) between, 1 outside tau."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        v = np.log(np.maximum(r, 1e-300) / tau ** 2) / np.log(1.0 / tau)
    return np.clip(v, 0.0, 1.0)


def log_cutoff_energy(tau, h=None, grade_min=None):
    """Dirichlet energy of eta_tau on a flat disc mesh of radius tau.

    Returns (measured, exact) with exact = 2 pi / log(1 / tau).
    """
    h = tau / 30 if h is None else h
    grade_min = tau * tau / 8 if grade_min is None else grade_min
    v, t = meshes.disc_mesh(tau, h, grade_min=grade_min)
    s = TriSurface(v, t, validate=False)
    K, _ = jacobi.cotan_stiffness(s)
    eta = log_cutoff(np.hypot(v[:, 0], v[:, 1]), tau)
    return float(eta @ (K @ eta)), float(2 * np.pi / np.log(1.0 / tau))


@dataclass
class WidthEstimate:
    """Upper bounds for the first two widths from explicit families."""

    omega1_upper: float
    omega2_upper: float
    margin: float
    families: dict
    details: dict = field(default_factory=dict)

    def to_json(self):
        return _jsonable({"omega1_upper": self.omega1_upper, "omega2_upper": self.omega2_upper,
                          "margin": self.margin, "families": self.families,
                          "details": self.details})


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(round(float(x), 12))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def width_report(space, mu=0.2, tau_bar=0.05, h=0.05, fol=None, n_grid=21, with_spectrum=True,
                 unmodified=True):
    """omega_1 <= max slice area, omega_2 <= sup of the catenoid-modified family.

    Raises WidthError when the margin 2 omega1_upper - omega2_upper is not positive.
    """
    fol = build_optimal_foliation(space, h=h, with_spectrum=with_spectrum) if fol is None else fol
    cfg = make_config(fol, mu=mu, tau_bar=tau_bar)
    fam = build_two_param(fol, cfg)
    mod = catenoid_modify(fam, cfg)
    res = mod.sample(n_grid)
    ts = np.linspace(-1, 1, 2001)
    omega1 = float(np.max([surfaces.area(fol.slice(t)) for t in ts[::100]] + [fol.area(0.0)]))
    omega2 = res["sup"]
    margin = 2 * omega1 - omega2
    details = {"foliation": fol.to_json(), "config": cfg.to_json(),
               "modified_regions": res["regions"], "modified_argmax": res["argmax"],
               "catenoid_saving": mod.saving, "catenoid_neck_cost": mod.neck_cost}
    if unmodified:
        un = fam.sample(n_grid)
        details["unmodified_sup"] = un["sup"]
    est = WidthEstimate(omega1, omega2, margin,
                        {"omega1": "optimal-foliation:" + fol.slices.name,
                         "omega2": "two-parameter:catenoid-modified"}, details)
    if not margin > 0:
        raise WidthError("width margin %.3g is not positive" % margin)
    return est


def unmodified_limit(fol, eps_values, mu=0.2, n_grid=11):
    """sup of the unmodified family as the neck thickness eps decreases."""
    table = _CollarTable(fol)
    out = []
    for e in eps_values:
        cfg = make_config(fol, mu=mu, table=table)
        cfg.eps = float(e)
        cfg.phi_out_max = 0.5 * measure_b2(fol, cfg.C * e * e / 8)
        out.append(build_two_param(fol, cfg).sample(n_grid)["sup"])
    return np.array(out)


def crossover(bcd, rtol=1e-6):
    """Smallest a with |Gamma_2(a)| > 2 |Gamma_1| for fixed (b, c, d), by bisection."""
    b, c, d = (float(x) for x in bcd)
    g1 = surfaces.planar_sphere_area((b, b, c, d), 1)

    def f(a):
        return surfaces.planar_sphere_area((a, b, c, d), 2) - 2 * g1

    lo, hi = b, 2 * b
    if f(lo) > 0:
        raise ValueError("|Gamma_2| already exceeds 2|Gamma_1| at a = b")
    while f(hi) <= 0:
        lo, hi = hi, 2 * hi
    a_star = bisect(f, lo, hi, xtol=1e-14, rtol=rtol / 4)
    grid = np.linspace(b, 2 * a_star, 200)
    vals = np.array([f(a) for a in grid])
    unique = bool(np.all(np.diff(vals) > 0))
    return {"a_star": float(a_star), "gamma1": float(g1),
            "gamma2_at": float(surfaces.planar_sphere_area((a_star, b, c, d), 2)),
            "monotone": unique}


def yau_witness(bcd, a_grid, h=0.08, mu=0.2, tau_bar=0.01):
    """First grid a with |Gamma_2(a)| > 2|Gamma_1|, with the width bound at that a.

    ``certified`` means omega2_upper < 2|Gamma_1| < |Gamma_2(a)|, so the
    min-max sphere for omega_2 cannot be Gamma_2(a).
    """
    b, c, d = bcd
    g1 = surfaces.planar_sphere_area((b, b, c, d), 1)
    for a in a_grid:
        g2 = surfaces.planar_sphere_area((a, b, c, d), 2)
        if g2 > 2 * g1:
            est = width_report(ambient.ellipsoid(a, b, c, d), mu=mu, tau_bar=tau_bar, h=h,
                               with_spectrum=False, unmodified=False)
            return {"a": float(a), "gamma1": float(g1), "gamma2": float(g2),
                    "omega1_upper": est.omega1_upper, "omega2_upper": est.omega2_upper,
                    "margin": est.margin,
                    "certified": bool(est.omega2_upper < 2 * est.omega1_upper
                                      and est.omega1_upper <= g1 and 2 * g1 < g2)}
    return None


def degeneration_experiment(bcd, a_grid, h=0.08, mu=0.2, tau_bar=0.05, n_grid=11):
    """Widths of E(a, b, c, d) as a grows: normalised two-parameter sup and linear bounds."""
    a_grid = np.asarray(a_grid, dtype=float)
    if np.any(np.diff(a_grid) <= 0):
        raise ValueError("a_grid must be increasing")
    b, c, d = bcd
    rows = []
    base = None
    for a in a_grid:
        space = ambient.ellipsoid(a, b, c, d, strict=False)
        if base is None:
            base = build_optimal_foliation(space, h=h, with_spectrum=False)
            fol = base
        else:
            fol = _rescaled_foliation(base, space)
        cfg = make_config(fol, mu=mu, tau_bar=tau_bar)
        mod = catenoid_modify(build_two_param(fol, cfg), cfg, strict=False)
        sup = mod.sample(n_grid)["sup"]
        g1 = fol.center_area
        # stacked slices give the linear bound k |Gamma_1|; the modified family improves k >= 2
        w2 = min(sup, 2 * g1)
        omega = [g1, w2, w2 + g1, w2 + 2 * g1]
        rows.append({"a": float(a), "gamma1": float(g1),
                     "gamma1_exact": float(surfaces.planar_sphere_area((a, b, c, d), 1)),
                     "gamma2_over_a": float(surfaces.planar_sphere_area((a, b, c, d), 2) / a),
                     "eps": cfg.eps, "sup2": float(sup), "normalized": float(sup / (2 * g1)),
                     "certified": bool(mod.certified and sup < 2 * g1),
                     "omega_upper": [float(w) for w in omega],
                     "linear_ratio": [float(w / (k + 1) / g1) for k, w in enumerate(omega)]})
    return rows


def _rescaled_foliation(fol, space):
    """The x1-slice foliation of a different a on the same Gamma_1 mesh."""
    sl = EllipsoidSlices(space.semiaxes[0])
    c = fol.center
    nu = surfaces.vertex_normals(c, space)
    w = np.einsum("ij,ij->i", sl.velocity(c.vertices, 0.0), nu)
    _, m = jacobi.cotan_stiffness(c)
    speed = float(np.sqrt(np.sum(m * w * w)))
    c_quad = fol.c_quad
    new = OptimalFoliation(space, sl, c, fol.center_area, None, None, c_quad, fol.C, speed,
                           -c_quad / speed ** 2, fol.dist, fol.antipode)
    new.levels = fol.levels
    return new


def save_report(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
