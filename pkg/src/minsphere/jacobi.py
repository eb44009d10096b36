"""Stability (Jacobi) operator L = -Lap - |A|^2 - Ric(nu, nu) on triangle meshes.

Linear finite elements: cotangent stiffness from intrinsic edge lengths,
lumped (barycentric) mass, and the potential sampled at vertices.  The
second fundamental form is taken from the gradient of the piecewise-linear
vertex normal field, so on a fixed set of an ambient reflection (where the
vertex normals are all parallel) it vanishes identically.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .ambient import ambient_ricci, ellipsoid
from .surfaces import _clip_fractions, area, ellipse_perimeter, planar_sphere, vertex_normals


class NotMinimalError(ValueError):
    """Mean curvature exceeds the minimality threshold."""


class SolverError(RuntimeError):
    """Eigensolver failed to converge to the requested residual."""


@dataclass(frozen=True)
class JacobiOperator:
    """Assembled stiffness, potential and mass of the stability operator."""

    surface: object
    space: object
    stiffness: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    A2: np.ndarray = field(repr=False)
    ricci: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)

    @property
    def potential(self):
        """Pointwise potential q = -(|A|^2 + Ric(nu, nu))."""
        return -(self.A2 + self.ricci)

    @property
    def matrix(self):
        return (self.stiffness + sp.diags(self.potential * self.mass)).tocsr()

    def to_json(self):
        return {"vertices": int(self.surface.n_vertices),
                "triangles": int(len(self.surface.triangles)),
                "mean_edge": self.surface.mean_edge(),
                "area": float(self.mass.sum()),
                "max_A2": float(self.A2.max()),
                "max_abs_H": float(np.abs(self.H).max())}


@dataclass
class JacobiSpectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    index: int
    nullity: int
    zero_tol: float
    residual: float
    lowest_signed: bool

    def to_json(self, mesh_stats=None):
        out = {"eigenvalues": [float(x) for x in self.eigenvalues],
               "index": int(self.index), "nullity": int(self.nullity),
               "zero_tol": float(self.zero_tol), "max_residual": float(self.residual),
               "lowest_signed": bool(self.lowest_signed)}
        if mesh_stats is not None:
            out["mesh_stats"] = mesh_stats
        return out


def cotan_stiffness(s):
    """Cotangent Laplacian (positive semidefinite) and lumped mass."""
    t = s.triangles
    L = s.edge_lengths()
    fa = s.face_areas()
    L2 = L * L
    n = s.n_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        # angle at vertex k opposite edge (i, j)
        cot = (L2[:, (k + 1) % 3] + L2[:, (k + 2) % 3] - L2[:, k]) / (4.0 * fa)
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    m = np.zeros(n)
    for k in range(3):
        np.add.at(m, t[:, k], fa / 3.0)
    return K, m


def shape_operator_fields(s, normals):
    """Per-vertex |A|^2 and H from the gradient of the linear normal field.

    Sign convention: outward normals give H = k1 + k2 > 0 on round spheres.
    """
    t = s.triangles
    p = s.vertices[t]
    nv = normals[t]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    d1 = nv[:, 1] - nv[:, 0]
    d2 = nv[:, 2] - nv[:, 0]
    G = np.stack([np.stack([np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e1, e2)], -1),
                  np.stack([np.einsum("ij,ij->i", e2, e1), np.einsum("ij,ij->i", e2, e2)], -1)], -2)
    B = np.stack([np.stack([np.einsum("ij,ij->i", d1, e1), np.einsum("ij,ij->i", d1, e2)], -1),
                  np.stack([np.einsum("ij,ij->i", d2, e1), np.einsum("ij,ij->i", d2, e2)], -1)], -2)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    S = np.linalg.solve(G, B)
    A2f = np.einsum("fij,fji->f", S, S)
    Hf = np.trace(S, axis1=-2, axis2=-1)
    fa = s.face_areas()
    A2 = np.zeros(s.n_vertices)
    H = np.zeros(s.n_vertices)
    w = np.zeros(s.n_vertices)
    for k in range(3):
        np.add.at(A2, t[:, k], fa * A2f)
        np.add.at(H, t[:, k], fa * Hf)
        np.add.at(w, t[:, k], fa)
    return A2 / w, H / w


def assemble(s, space, h_tol=1e-3, waive_minimal=False, reflection_certificate=False):
    """Assemble the stability operator of a minimal surface.

    Parameters
    ----------
    s : TriSurface
    space : AmbientSpace
    h_tol : minimality threshold relative to the curvature scale sqrt(4 pi / area).
    waive_minimal : skip the minimality check (diagnostics on non-minimal spheres).
    reflection_certificate : the surface is the fixed set of an ambient
        reflection, so |A|^2 is set to zero exactly.
    """
    K, m = cotan_stiffness(s)
    nu = vertex_normals(s, space)
    A2, H = shape_operator_fields(s, nu)
    if reflection_certificate:
        A2 = np.zeros_like(A2)
    scale = np.sqrt(4 * np.pi / area(s))
    if not waive_minimal and np.abs(H).max() > h_tol * scale:
        raise NotMinimalError("surface is not minimal: max |H| = %.3g > %.3g"
                              % (np.abs(H).max(), h_tol * scale))
    if s.dim == 3:
        ric = np.zeros(s.n_vertices)
    else:
        ric = ambient_ricci(space, s.vertices, nu, check=False)
    return JacobiOperator(s, space, K, m, A2, ric, H)


def default_zero_tol(op, lam0):
    """Tolerance for calling an eigenvalue zero.

    Linear elements resolve eigenvalues only to O(h^2), so the tolerance is
    the larger of 1e-6 |lam0| and 20 (h / l)^2 / l^2, with h the mean edge
    and l = sqrt(area / 4 pi) the size of the surface.  It is tied to the
    surface size rather than to lam0 because strongly curved ambient regions
    can make lam0 large without making the zero modes less accurate.
    """
    ell = np.sqrt(op.mass.sum() / (4 * np.pi))
    h = op.surface.mean_edge()
    return max(1e-6 * abs(lam0), 20.0 * (h / ell) ** 2 / ell ** 2)


def count_below(op, sigma):
    """Number of eigenvalues below ``sigma`` (Sylvester inertia of A - sigma M).

    Uses a symmetric-mode sparse LU with diagonal pivots, whose U diagonal
    carries the signs of an LDL^T factorisation.
    """
    A = (op.matrix - sigma * sp.diags(op.mass)).tocsc()
    for ordering in ("COLAMD", "MMD_AT_PLUS_A"):
        lu = splu(A, permc_spec=ordering, diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
        if np.array_equal(lu.perm_r, lu.perm_c):
            break
    else:
        raise SolverError("symmetric factorisation pivoted off the diagonal")
    d = lu.U.diagonal()
    if np.any(d == 0):
        raise SolverError("shift %.6g is an eigenvalue to working precision" % sigma)
    return int(np.sum(d < 0))


def _shift_below_lowest(op, steps=12):
    """A shift just below the lowest eigenvalue, by bisection on inertia."""
    lo = float(op.potential.min()) - 1.0
    hi = float(op.potential @ op.mass / op.mass.sum()) + 1e-9
    span = hi - lo
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if count_below(op, mid) == 0:
            lo = mid
        else:
            hi = mid
    return lo - max(0.05 * abs(lo), 0.05 * span / 2 ** steps, 1e-3)


def spectrum(op, k=None, zero_tol=None, resid_tol=1e-9):
    """Lowest eigenpairs, index and nullity of the stability operator.

    Index and nullity are exact inertia counts of the discrete problem
    relative to ``zero_tol``.  Eigenpairs come from shift-invert Lanczos
    with the shift placed just below the lowest eigenvalue; by default
    enough of them are computed to cover every eigenvalue up to the
    zero tolerance plus six more (at least twelve).
    """
    A = op.matrix
    M = sp.diags(op.mass).tocsc()
    n = op.surface.n_vertices
    tol0 = default_zero_tol(op, 0.0) if zero_tol is None else float(zero_tol)
    n_le = count_below(op, tol0)
    kk = max(12, n_le + 6) if k is None else int(k)
    if kk < 1 or kk >= n - 1:
        raise ValueError("k must satisfy 1 <= k < n - 1")
    sigma = _shift_below_lowest(op)
    vals, vecs = eigsh(A.tocsc(), k=kk, M=M, sigma=sigma, which="LM", tol=0.0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    tol = default_zero_tol(op, vals[0]) if zero_tol is None else float(zero_tol)
    index = count_below(op, -tol)
    nullity = count_below(op, tol) - index
    R = A @ vecs - (M @ vecs) * vals
    # backward-error scaling
    normA = sp.linalg.norm(A, 1)
    denom = (normA + np.abs(vals) * op.mass.max()) * np.linalg.norm(vecs, axis=0)
    resid = float(np.max(np.linalg.norm(R, axis=0) / denom))
    if resid > resid_tol:
        raise SolverError("eigensolver residual %.3g exceeds %.3g" % (resid, resid_tol))
    f0 = vecs[:, 0]
    if f0 @ op.mass < 0:
        vecs[:, 0] = -f0
    signed = bool(vecs[:, 0].min() >= -1e-8 * np.abs(vecs[:, 0]).max())
    return JacobiSpectrum(vals, vecs, index, nullity, tol, resid, signed)


def rayleigh_quotient(op, f):
    """(f, L f) / (f, f) in the finite-element inner products."""
    f = np.asarray(f, dtype=float)
    mf = f @ (op.mass * f)
    if not np.any(f) or mf == 0:
        raise ValueError("Rayleigh quotient of the zero function")
    return float(f @ (op.matrix @ f) / mf)


def energy_parts(op, f):
    """Dirichlet energy and potential integral of f (numerator split in two)."""
    f = np.asarray(f, dtype=float)
    return float(f @ (op.stiffness @ f)), float(f @ (op.potential * op.mass * f))


def reflection_parity(s, f, coord, tol=1e-6):
    """+1 or -1 if f is even or odd under x_coord -> -x_coord, else 0.

    Requires the mesh vertices to be mapped onto each other by the reflection.
    """
    from scipy.spatial import cKDTree
    v = s.vertices
    w = v.copy()
    w[:, coord] *= -1
    dist, idx = cKDTree(v).query(w)
    if dist.max() > 1e-9 * np.abs(v).max():
        raise ValueError("mesh is not symmetric under the reflection")
    scale = np.abs(f).max()
    if np.abs(f[idx] - f).max() <= tol * scale:
        return 1
    if np.abs(f[idx] + f).max() <= tol * scale:
        return -1
    return 0


def phi_AB(x1, A, B):
    """Piecewise-linear cutoff: 0 below A-1, 1 on [A, B], 0 above B+1."""
    x1 = np.asarray(x1, dtype=float)
    return np.clip(np.minimum(x1 + 1 - A, -x1 + B + 1), 0.0, 1.0)


def cylinder_ricci_lower_bound(b, c, d, n=4001, a_far=1e8):
    """min of Ric(nu, nu) along the waist of the second planar sphere as a -> infinity.

    Evaluated on E(a_far, b, c, d) at x1 = 0, where Ric(e2, e2) tends to the
    Gauss curvature of the (b, c, d) ellipsoid along its equator.
    """
    E = ellipsoid(a_far, b, c, d, strict=False)
    t = np.linspace(0, 2 * np.pi, n)
    x = np.column_stack([np.zeros(n), np.zeros(n), c * np.cos(t), d * np.sin(t)])
    nu = np.tile([0.0, 1.0, 0.0, 0.0], (n, 1))
    return float(ambient_ricci(E, x, nu).min())


def band_area(s, values, lo, hi):
    """Area of {lo <= values <= hi} for a piecewise-linear vertex field."""
    fa = s.face_areas()
    d = values[s.triangles]
    return float(np.sum(fa * (_clip_fractions(d, hi) - _clip_fractions(d, lo))))


def index_lower_bound_phiAB(bcd, a_grid, N=None, h=0.12, with_spectrum=True):
    """Rayleigh quotients of three disjoint cutoffs on Gamma_2(a) along ``a_grid``.

    Returns a dict with the Ricci bound mu, the chosen N, per-a rows and the
    least a for which all three quotients are negative (None if none is).
    """
    b, c, d = (float(x) for x in bcd)
    mu = cylinder_ricci_lower_bound(b, c, d)
    if N is None:
        N = 1.05 * max(1.0 / mu, 2.0)
    if not N > max(1.0 / mu, 2.0):
        raise ValueError("N must exceed max(1/mu, 2) = %.4g" % max(1.0 / mu, 2.0))
    windows = [(-4 * N, -2 * N), (-N, N), (2 * N, 4 * N)]
    G = ellipse_perimeter(c, d)
    rows = []
    for a in a_grid:
        E = ellipsoid(float(a), b, c, d)
        s = planar_sphere(E, 2, h, axis=0)
        op = assemble(s, E)
        x1 = s.vertices[:, 0]
        quots, parts = [], []
        for A, B in windows:
            f = phi_AB(x1, A, B)
            if not np.any(f):
                quots.append(None)
                parts.append(None)
                continue
            quots.append(rayleigh_quotient(op, f))
            parts.append(energy_parts(op, f))
        ax1 = np.abs(x1)
        row = {"a": float(a), "quotients": quots, "energy_parts": parts,
               "max_A2": float(op.A2.max()),
               "strip_area": band_area(s, ax1, N, N + 1),
               "core_area": band_area(s, ax1, 0.0, N),
               "vertices": int(s.n_vertices)}
        if with_spectrum:
            eig = spectrum(op)
            row.update(index=eig.index, nullity=eig.nullity,
                       eigenvalues=[float(v) for v in eig.eigenvalues[:12]])
        rows.append(row)
    first = next((r["a"] for r in rows
                  if all(q is not None and q < 0 for q in r["quotients"])), None)
    return {"mu": mu, "N": float(N), "windows": windows, "rows": rows,
            "first_a_all_negative": first,
            # the two readings of |F|: unit-width strip of the waist curve, and the enclosed ellipse
            "F_strip": G, "F_ellipse": float(np.pi * c * d),
            "strip_limit": 2 * G, "core_limit_per_N": 2 * G}
