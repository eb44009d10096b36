"""Ambient three-manifolds: flat space, round three-spheres and ellipsoids in R^4.

Points are stored in embedding coordinates (R^3 for flat space, R^4 for the
two curved spaces).  The angular charts are only needed for ``metric_at``;
everything else works directly on embedded points, which avoids chart seams.

The round sphere of radius R is handled as the ellipsoid with four equal
semiaxes, so both curved kinds share the quadric machinery below.
"""

from dataclasses import dataclass
import json

import numpy as np


class DomainError(ValueError):
    """Point outside the chart domain."""


class IntegrationError(RuntimeError):
    """Geodesic integration failed; ``t_valid`` is the furthest good parameter."""

    def __init__(self, msg, t_valid=0.0):
        super().__init__(msg)
        self.t_valid = t_valid


EUCLIDEAN3 = "euclidean3"
SPHERE3 = "sphere3"
ELLIPSOID4 = "ellipsoid4"


@dataclass(frozen=True)
class AmbientSpace:
    """One of the three ambient spaces.

    Use the constructors :func:`euclidean`, :func:`round_sphere` and
    :func:`ellipsoid` rather than building instances by hand.
    """

    kind: str
    semiaxes: tuple = ()

    @property
    def dim(self):
        return 3 if self.kind == EUCLIDEAN3 else 4

    @property
    def radius(self):
        if self.kind != SPHERE3:
            raise AttributeError("only round spheres have a radius")
        return self.semiaxes[0]

    @property
    def curved(self):
        return self.kind != EUCLIDEAN3

    def to_json(self):
        if self.kind == EUCLIDEAN3:
            return {"kind": EUCLIDEAN3}
        if self.kind == SPHERE3:
            return {"kind": SPHERE3, "radius": self.radius}
        return {"kind": ELLIPSOID4, "semiaxes": list(self.semiaxes)}


def euclidean():
    return AmbientSpace(EUCLIDEAN3)


def round_sphere(radius=1.0):
    if not radius > 0:
        raise ValueError("radius must be positive")
    return AmbientSpace(SPHERE3, (float(radius),) * 4)


def ellipsoid(a, b, c, d, strict=True):
    """E(a,b,c,d) in R^4.

    ``strict=False`` relaxes the ordering a > b > c > d (used for consistency
    checks with equal semiaxes and for Gamma_2 families where a is swept).
    """
    ax = tuple(float(v) for v in (a, b, c, d))
    if min(ax) <= 0:
        raise ValueError("semiaxes must be positive")
    if strict and not (ax[0] > ax[1] > ax[2] > ax[3]):
        raise ValueError("semiaxes must satisfy a > b > c > d > 0")
    return AmbientSpace(ELLIPSOID4, ax)


def space_from_json(obj):
    """Parse ``{"kind": "ellipsoid4", "semiaxes": [...]}`` and friends."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind == EUCLIDEAN3:
        return euclidean()
    if kind == SPHERE3:
        return round_sphere(obj.get("radius", 1.0))
    if kind == ELLIPSOID4:
        ax = obj["semiaxes"]
        if len(ax) != 4:
            raise ValueError("ellipsoid4 needs four semiaxes")
        return ellipsoid(*ax, strict=obj.get("strict", True))
    raise ValueError(f"unknown space kind {kind!r}")


# ---------------------------------------------------------------------------
# angular charts and metric


def chart_embedding(space, q, chart=0):
    """Embed angular chart coordinates ``q = (psi, theta, phi)``.

    Chart 0 has its poles on the x1 axis, chart 1 on the x4 axis (coordinates
    reversed), so together they cover the whole 3-manifold.
    For flat space the chart is the identity.
    """
    q = np.asarray(q, dtype=float)
    if space.kind == EUCLIDEAN3:
        return q.copy()
    psi, theta, phi = q[..., 0], q[..., 1], q[..., 2]
    u = np.stack([
        np.cos(psi),
        np.sin(psi) * np.cos(theta),
        np.sin(psi) * np.sin(theta) * np.cos(phi),
        np.sin(psi) * np.sin(theta) * np.sin(phi),
    ], axis=-1)
    if chart == 1:
        u = u[..., ::-1]
    return u * np.asarray(space.semiaxes)


def _chart_jacobian(space, q, chart=0):
    q = np.asarray(q, dtype=float)
    psi, theta, phi = q
    sp, cp = np.sin(psi), np.cos(psi)
    st, ct = np.sin(theta), np.cos(theta)
    sf, cf = np.sin(phi), np.cos(phi)
    J = np.array([
        [-sp, 0.0, 0.0],
        [cp * ct, -sp * st, 0.0],
        [cp * st * cf, sp * ct * cf, -sp * st * sf],
        [cp * st * sf, sp * ct * sf, sp * st * cf],
    ])
    if chart == 1:
        J = J[::-1]
    return J * np.asarray(space.semiaxes)[:, None]


def metric_at(space, q, chart=0):
    """First fundamental form (3x3) in chart coordinates at ``q``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (3,):
        raise DomainError("chart point must have three coordinates")
    if space.kind == EUCLIDEAN3:
        return np.eye(3)
    psi, theta, _ = q
    if not (0.0 < psi < np.pi and 0.0 < theta < np.pi):
        raise DomainError("angular chart requires 0 < psi, theta < pi")
    J = _chart_jacobian(space, q, chart)
    G = J.T @ J
    return 0.5 * (G + G.T)


# ---------------------------------------------------------------------------
# quadric geometry


def _hess_diag(space):
    return 2.0 / np.asarray(space.semiaxes) ** 2


def on_space(space, x, tol=1e-8):
    x = np.asarray(x, dtype=float)
    if space.kind == EUCLIDEAN3:
        return np.ones(x.shape[:-1], dtype=bool)
    f = np.sum(x**2 / np.asarray(space.semiaxes) ** 2, axis=-1)
    return np.abs(f - 1.0) < tol


def unit_normal(space, x):
    """Outward unit normal of the hypersurface at embedded points ``x``."""
    x = np.asarray(x, dtype=float)
    g = _hess_diag(space) * x
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def project_tangent(space, x, v):
    """Orthogonal projection of ambient vectors onto the tangent space."""
    v = np.asarray(v, dtype=float)
    if space.kind == EUCLIDEAN3:
        return v.copy()
    n = unit_normal(space, x)
    return v - np.sum(v * n, axis=-1, keepdims=True) * n


def ambient_ricci(space, x, v, check=True):
    """Ric(v, v) of the 3-manifold at embedded points ``x``.

    For a hypersurface of flat R^4 the Gauss equation gives
    ``Ric(v,v) = H h(v,v) - |S v|^2`` with h the second fundamental form
    (w.r.t. the inward normal), S the shape operator and H its trace.
    Broadcasts over leading axes.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if space.kind == EUCLIDEAN3:
        if check and not np.allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-8):
            raise ValueError("direction must be a unit vector")
        return np.zeros(np.broadcast_shapes(x.shape, v.shape)[:-1])
    D = _hess_diag(space)
    grad = D * x
    gnorm = np.linalg.norm(grad, axis=-1)
    n = grad / gnorm[..., None]
    if check:
        if not np.allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-8):
            raise ValueError("direction must be a unit vector")
        if np.any(np.abs(np.sum(v * n, axis=-1)) > 1e-8):
            raise ValueError("direction must be tangent to the space")
    h_vv = np.sum(D * v * v, axis=-1) / gnorm
    Dv = D * v
    Sv = Dv - np.sum(Dv * n, axis=-1, keepdims=True) * n
    h2_vv = np.sum(Sv * Sv, axis=-1) / gnorm**2
    H = (np.sum(D) - np.sum(D * n * n, axis=-1)) / gnorm
    return H * h_vv - h2_vv


def scalar_curvature(space, x):
    """Scalar curvature (sum of Ricci over an orthonormal frame)."""
    if space.kind == EUCLIDEAN3:
        return np.zeros(np.shape(x)[:-1])
    x = np.asarray(x, dtype=float)
    D = _hess_diag(space)
    grad = D * x
    gnorm = np.linalg.norm(grad, axis=-1)
    n = grad / gnorm[..., None]
    # h = P D P / |grad|; R = H^2 - |h|^2
    P = np.eye(4) - n[..., :, None] * n[..., None, :]
    h = P @ (D[:, None] * P) / gnorm[..., None, None]
    H = np.trace(h, axis1=-2, axis2=-1)
    return H**2 - np.sum(h * h, axis=(-2, -1))


# ---------------------------------------------------------------------------
# geodesics


def _geodesic_rhs(D, y):
    x, u = y[..., :4], y[..., 4:]
    grad = D * x
    lam = np.sum(u * D * u, axis=-1) / np.sum(grad * grad, axis=-1)
    return np.concatenate([u, -lam[..., None] * grad], axis=-1)


def _rk4(D, y, h):
    k1 = _geodesic_rhs(D, y)
    k2 = _geodesic_rhs(D, y + 0.5 * h * k1)
    k3 = _geodesic_rhs(D, y + 0.5 * h * k2)
    k4 = _geodesic_rhs(D, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_geodesic(space, x, u, tol=1e-9, h0=0.05, max_steps=200000,
                       return_velocity=False):
    """Follow geodesics from ``x`` with initial velocity ``u`` for unit time.

    Classical RK4 with step-doubling error control; all rows share one step
    size.  ``tol`` bounds the local error per unit parameter.  With
    ``return_velocity`` the final velocities are returned as well.
    """
    D = _hess_diag(space)
    y = np.concatenate([np.atleast_2d(x), np.atleast_2d(u)], axis=-1).astype(float)
    speed = np.max(np.linalg.norm(y[:, 4:], axis=-1))
    if speed == 0.0:
        return (y[:, :4].copy(), y[:, 4:].copy()) if return_velocity else y[:, :4].copy()
    t, h = 0.0, min(h0 / max(speed, 1e-300), 1.0)
    steps = 0
    while t < 1.0 - 1e-15:
        h = min(h, 1.0 - t)
        full = _rk4(D, y, h)
        half = _rk4(D, _rk4(D, y, 0.5 * h), 0.5 * h)
        err = np.max(np.abs(full - half)) / 15.0
        if err <= tol * h or h < 1e-14:
            if not np.all(np.isfinite(half)):
                raise IntegrationError("non-finite geodesic state", t)
            y = half + (half - full) / 15.0
            t += h
            h *= min(4.0, 0.9 * (tol * h / max(err, 1e-300)) ** 0.2) if err > 0 else 2.0
        else:
            h *= max(0.1, 0.9 * (tol * h / err) ** 0.2)
        steps += 1
        if steps > max_steps:
            raise IntegrationError("step limit exceeded", t)
    return (y[:, :4], y[:, 4:]) if return_velocity else y[:, :4]


def exp_map(space, p, v, t=1.0, method="auto", tol=1e-9):
    """exp_p(t v).  Broadcasts over rows of ``p`` and ``v``.

    ``method="auto"`` uses the closed form on round spheres and the RK4
    integrator on ellipsoids; ``method="integrate"`` forces the integrator.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float) * (t[..., None] if t.ndim else t)
    if space.kind == EUCLIDEAN3:
        return p + v
    if space.kind == SPHERE3 and method == "auto":
        R = space.radius
        s = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(s > 0, s, 1.0)
        return np.cos(s / R) * p + np.where(s > 0, R * np.sin(s / R) / safe, 1.0) * v
    single = p.ndim == 1
    out = integrate_geodesic(space, p, v, tol=tol)
    return out[0] if single else out


def parallel_transport_sphere(space, p, v, s):
    """Velocity after running the unit-speed-scaled geodesic to parameter s."""
    R = space.radius
    speed = np.linalg.norm(v)
    w = v / speed
    ang = speed * s / R
    return speed * (np.cos(ang) * w - np.sin(ang) * p / R)
