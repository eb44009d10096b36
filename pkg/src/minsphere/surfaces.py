"""Triangulated two-spheres and axisymmetric profiles.

Vertices of a :class:`TriSurface` are stored in the embedding coordinates of
the ambient space (R^3 for Euclidean space, R^4 for the three-sphere and the
ellipsoids), so the induced metric of a triangle is the Euclidean one of its
chordal triangle.  Chordal areas converge at O(h^2) under refinement.

The module also provides the intrinsic geodesic distance from a vertex
(fast marching with triangle unfolding), excision of a geodesic disc around
the marked vertex, normal graphs pushed through the ambient exponential map,
and the closed-form area of the two-dimensional ellipsoids cut out of a
four-dimensional ellipsoid by coordinate hyperplanes.
"""

import heapq
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import meshes
from .ambient import AmbientSpace, euclidean, exp_map, project_tangent, space_from_json, unit_normal


class MeshError(ValueError):
    """Mesh is not a closed, non-degenerate two-sphere."""


class ExcisionError(ValueError):
    """Geodesic disc is not embedded or exceeds the surface."""


class FoldError(ValueError):
    """Normal graph folds over (triangle orientation flips)."""


class TriSurface:
    """Immutable closed triangle mesh of a two-sphere.

    Parameters
    ----------
    vertices : (n, 3) or (n, 4) array of embedding coordinates.
    triangles : (m, 3) integer array, consistently oriented.
    marked : optional index of the marked vertex.
    validate : run the manifold / Euler / degeneracy checks.
    """

    def __init__(self, vertices, triangles, marked=None, validate=True):
        self.vertices = np.array(vertices, dtype=float)
        self.triangles = np.array(triangles, dtype=np.int64)
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self.marked = None if marked is None else int(marked)
        self._edges = None
        self.genus_check = None
        if validate:
            self._validate()

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def edges(self):
        """Unique undirected edges as an (e, 2) array with i < j."""
        if self._edges is None:
            t = self.triangles
            e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            self._edges = np.unique(e, axis=0)
        return self._edges

    def _validate(self):
        t = self.triangles
        if t.ndim != 2 or t.shape[1] != 3 or t.min() < 0 or t.max() >= self.n_vertices:
            raise MeshError("triangle indices out of range")
        directed = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            raise MeshError("mesh is not closed: %d edges not shared by exactly two triangles"
                            % int(np.sum(counts != 2)))
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        if np.any(dcounts != 1):
            raise MeshError("inconsistent triangle orientation")
        chi = self.n_vertices - len(counts) + len(t)
        self.genus_check = int(chi)
        if chi != 2:
            raise MeshError("Euler characteristic %d, expected 2" % chi)
        fa = self.face_areas()
        if np.any(fa <= 1e-12 * fa.mean()):
            raise MeshError("degenerate triangles present")

    def face_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        g11 = np.einsum("ij,ij->i", e1, e1)
        g22 = np.einsum("ij,ij->i", e2, e2)
        g12 = np.einsum("ij,ij->i", e1, e2)
        return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0))

    def edge_lengths(self):
        """Per-triangle lengths of the edges opposite vertices 0, 1, 2."""
        p = self.vertices[self.triangles]
        return np.stack([np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                         np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                         np.linalg.norm(p[:, 1] - p[:, 0], axis=1)], axis=1)

    def mean_edge(self):
        e = self.edges()
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    def with_vertices(self, vertices, marked="keep"):
        s = TriSurface.__new__(TriSurface)
        s.vertices = np.array(vertices, dtype=float)
        s.vertices.setflags(write=False)
        s.triangles = self.triangles
        s.marked = self.marked if marked == "keep" else marked
        s._edges = self._edges
        s.genus_check = self.genus_check
        return s


def area(s, space=None):
    """Total area of the mesh (sum of chordal triangle areas)."""
    if space is not None and s.dim != space.dim:
        raise MeshError("vertex dimension %d does not match ambient space" % s.dim)
    return float(s.face_areas().sum())


# ----------------------------------------------------------------------------
# constructors

def _lift(v3, i, dim=4):
    """Insert a zero coordinate at position i (0-based)."""
    return np.insert(v3, i, 0.0, axis=1) if dim == 4 else v3


def great_sphere(level=5, radius=1.0):
    """Great two-sphere {x4 = 0} of the round three-sphere; marked at (0, 0, R, 0)."""
    v, t = meshes.icosphere(level)
    v = _lift(radius * v, 3)
    return TriSurface(v, t, marked=0)


def round_sphere_mesh(level=5, radius=1.0):
    """Round sphere in Euclidean space; marked at the north pole."""
    v, t = meshes.icosphere(level)
    return TriSurface(radius * v, t, marked=0)


def ellipsoid_mesh(axes, h, axis=2, grade_min=None, m_pole=48):
    """Triaxial ellipsoid in Euclidean space, marked at +axes[axis] on the polar axis."""
    v, t = meshes.ring_mesh(axes, h, axis=axis, grade_min=grade_min, m_pole=m_pole)
    return TriSurface(v, t, marked=0)


def planar_sphere(space, i, h, axis=None, grade_min=None, m_pole=48):
    """Mesh of the two-sphere cut from a four-dimensional space by {x_i = 0}.

    ``i`` is 1-based.  The rings run around the longest remaining semiaxis
    unless ``axis`` (0-based within the remaining three) is given.  The
    marked vertex is the first pole.
    """
    if space.dim != 4:
        raise ValueError("planar spheres need a four-dimensional embedding")
    ax = [float(a) for k, a in enumerate(space.semiaxes) if k != i - 1]
    if axis is None:
        axis = int(np.argmax(ax))
    v, t = meshes.ring_mesh(ax, h, axis=axis, grade_min=grade_min, m_pole=m_pole)
    return TriSurface(_lift(v, i - 1), t, marked=0)


def refine_surface(s, space=None):
    """Midpoint subdivision with new vertices projected back to the ambient space."""
    project = None
    if space is not None and space.curved:
        a = np.asarray(space.semiaxes, dtype=float)

        def project(v):
            scale = np.sqrt(np.sum((v / a) ** 2, axis=1))
            return v / scale[:, None]
    v, t = meshes.refine(s.vertices, s.triangles, project)
    return TriSurface(v, t, marked=s.marked)


# ----------------------------------------------------------------------------
# closed-form area of two-ellipsoids

def _ellipsoid_area_elliptic(A, B, C):
    A, B, C = sorted((A, B, C), reverse=True)
    if np.isclose(A, C, rtol=1e-14, atol=0.0):
        return 4.0 * np.pi * A * A
    phi = np.arccos(C / A)
    m = (A * A * (B * B - C * C)) / (B * B * (A * A - C * C))
    m = min(max(m, 0.0), 1.0)
    F = special.ellipkinc(phi, m)
    E = special.ellipeinc(phi, m)
    sphi = np.sin(phi)
    return float(2 * np.pi * C * C + 2 * np.pi * A * B / sphi * (E * sphi ** 2 + F * np.cos(phi) ** 2))


def _ellipsoid_area_quad(A, B, C):
    def f(phi, th):
        st, ct = np.sin(th), np.cos(th)
        return st * np.sqrt((B * C * st * np.cos(phi)) ** 2 + (A * C * st * np.sin(phi)) ** 2
                            + (A * B * ct) ** 2)

    val, _ = integrate.dblquad(f, 0.0, np.pi / 2, 0.0, np.pi / 2, epsabs=0.0, epsrel=1e-12)
    return 8.0 * val


def ellipsoid_area(axes, method="elliptic"):
    """Surface area of the Euclidean ellipsoid with the given three semiaxes."""
    A, B, C = (float(x) for x in axes)
    if min(A, B, C) <= 0:
        raise ValueError("semiaxes must be positive")
    if method == "elliptic":
        return _ellipsoid_area_elliptic(A, B, C)
    if method == "quadrature":
        return _ellipsoid_area_quad(A, B, C)
    raise ValueError("unknown method %r" % method)


def planar_sphere_area(semiaxes, i, method="elliptic"):
    """Area of E(a, b, c, d) intersected with {x_i = 0} (``i`` is 1-based).

    The default uses Legendre's elliptic-integral formula; ``method="quadrature"``
    integrates the area element adaptively instead (slower, used as a check).
    """
    semiaxes = [float(x) for x in semiaxes]
    if len(semiaxes) != 4 or not 1 <= i <= 4:
        raise ValueError("need four semiaxes and 1 <= i <= 4")
    rest = [a for k, a in enumerate(semiaxes) if k != i - 1]
    return ellipsoid_area(rest, method)


def ellipse_perimeter(c, d):
    """Perimeter of the ellipse with semiaxes c, d."""
    c, d = max(c, d), min(c, d)
    return float(4 * c * special.ellipe(1 - (d / c) ** 2))


# ----------------------------------------------------------------------------
# intrinsic geodesic distance

def _vertex_faces(s):
    t = s.triangles
    order = np.argsort(t.ravel(), kind="stable")
    faces = order // 3
    counts = np.bincount(t.ravel(), minlength=s.n_vertices)
    starts = np.concatenate([[0], np.cumsum(counts)])
    return faces, starts


def _unfold_update(dA, dB, c, a, b):
    """Distance at C from values at A, B with a planar virtual source.

    ``c`` = |AB|, ``b`` = |AC|, ``a`` = |BC|.
    """
    best = min(dA + b, dB + a)
    if c <= 0:
        return best
    # C in the plane, A at origin, B at (c, 0), C above
    cx = (b * b - a * a + c * c) / (2 * c)
    cy2 = b * b - cx * cx
    if cy2 <= 0:
        return best
    cy = np.sqrt(cy2)
    # virtual source below AB at distances dA, dB
    sx = (dA * dA - dB * dB + c * c) / (2 * c)
    sy2 = dA * dA - sx * sx
    if sy2 < 0:
        return best
    sy = -np.sqrt(sy2)
    # the straight ray S -> C must cross segment AB
    tcross = -sy / (cy - sy)
    xcross = sx + tcross * (cx - sx)
    if 0.0 <= xcross <= c:
        return min(best, float(np.hypot(cx - sx, cy - sy)))
    return best


def geodesic_distance(s, source=None):
    """Intrinsic distance from a vertex over the mesh (fast marching with unfolding).

    Exact for distances realised by straight lines in an unfolded strip of
    triangles; first order otherwise.
    """
    src = s.marked if source is None else int(source)
    if src is None:
        raise ValueError("no source vertex")
    v = s.vertices
    t = s.triangles
    faces, starts = _vertex_faces(s)
    n = s.n_vertices
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, i = heapq.heappop(heap)
        if done[i]:
            continue
        done[i] = True
        for f in faces[starts[i]:starts[i + 1]]:
            tri = t[f]
            for k in range(3):
                c = tri[k]
                if done[c]:
                    continue
                p, q = tri[(k + 1) % 3], tri[(k + 2) % 3]
                lc = np.linalg.norm(v[c] - v[i])
                cand = d + lc
                other = q if p == i else p
                if done[other]:
                    cand = min(cand, _unfold_update(
                        dist[i], dist[other],
                        float(np.linalg.norm(v[other] - v[i])),
                        float(np.linalg.norm(v[c] - v[other])), lc))
                if cand < dist[c]:
                    dist[c] = cand
                    heapq.heappush(heap, (cand, c))
    return dist


# ----------------------------------------------------------------------------
# geodesic disc excision

@dataclass
class GeodesicDiscExcision:
    """Result of removing the intrinsic disc of radius ``radius`` about ``center``."""

    base: TriSurface
    center: int
    radius: float
    boundary_loop: np.ndarray
    disc_area: float
    remaining_area: float
    distance: np.ndarray = field(repr=False)


def _clip_fractions(d, mu):
    """Fraction of each triangle where the linear interpolant of d is below mu."""
    inside = d < mu
    n_in = inside.sum(axis=1)
    frac = np.where(n_in == 3, 1.0, 0.0)
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        one = (n_in == 1) & inside[:, k]
        if np.any(one):
            dk, dj, dl = d[one, k], d[one, j], d[one, l]
            frac[one] = (mu - dk) / (dj - dk) * (mu - dk) / (dl - dk)
        two = (n_in == 2) & ~inside[:, k]
        if np.any(two):
            dk, dj, dl = d[two, k], d[two, j], d[two, l]
            frac[two] = 1.0 - (dk - mu) / (dk - dj) * (dk - mu) / (dk - dl)
    return frac


def level_loops(s, values, level):
    """Oriented closed loops of the level set {values = level}.

    Each loop keeps the sublevel region on its left (with respect to the
    triangle orientation).  Returns a list of (m, dim) point arrays.
    """
    t = s.triangles
    v = s.vertices
    val = values[t]
    inside = val < level
    n_in = inside.sum(axis=1)
    cross = np.nonzero((n_in == 1) | (n_in == 2))[0]
    start_of = {}
    point = {}
    for f in cross:
        exit_key = entry_key = None
        for k in range(3):
            a, b = t[f, k], t[f, (k + 1) % 3]
            ia, ib = inside[f, k], inside[f, (k + 1) % 3]
            if ia == ib:
                continue
            key = (min(a, b), max(a, b))
            if key not in point:
                da, db = values[a], values[b]
                w = (level - da) / (db - da)
                point[key] = v[a] + w * (v[b] - v[a])
            if ia:
                exit_key = key
            else:
                entry_key = key
        start_of[exit_key] = entry_key
    loops = []
    seen = set()
    for k0 in start_of:
        if k0 in seen:
            continue
        loop = []
        k = k0
        while k not in seen:
            seen.add(k)
            loop.append(point[k])
            k = start_of.get(k)
            if k is None:
                raise ExcisionError("level set is not closed")
        loops.append(np.array(loop))
    return loops


def disc_area_profile(s, dist, radii):
    """Area of the sublevel sets {dist < r} for each r in ``radii``."""
    fa = s.face_areas()
    d = dist[s.triangles]
    return np.array([float(np.sum(fa * _clip_fractions(d, r))) for r in np.atleast_1d(radii)])


def excise_geodesic_disc(s, space, mu, dist=None):
    """Remove the intrinsic disc of radius ``mu`` about the marked vertex."""
    if s.marked is None:
        raise ExcisionError("surface has no marked vertex")
    if not mu > 0:
        raise ExcisionError("radius must be positive")
    if dist is None:
        dist = geodesic_distance(s)
    if mu >= dist.max():
        raise ExcisionError("radius %.6g reaches the whole surface (max distance %.6g)"
                            % (mu, dist.max()))
    loops = level_loops(s, dist, mu)
    if len(loops) != 1:
        raise ExcisionError("disc boundary has %d components; disc not embedded" % len(loops))
    total = area(s)
    disc = float(disc_area_profile(s, dist, [mu])[0])
    return GeodesicDiscExcision(s, s.marked, float(mu), loops[0], disc, total - disc, dist)


# ----------------------------------------------------------------------------
# normals and normal graphs

def cross4(a, b, c):
    """Generalised cross product in R^4 (orthogonal to a, b, c; rowwise)."""
    m = np.stack([a, b, c], axis=-2)
    out = np.empty(a.shape)
    cols = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
    for k in range(4):
        out[..., k] = (-1) ** k * np.linalg.det(m[..., cols[k]])
    return out


def _face_normals(s, space, vertices=None):
    v = s.vertices if vertices is None else vertices
    p = v[s.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    if v.shape[1] == 3:
        return np.cross(e1, e2)
    c = p.mean(axis=1)
    N = unit_normal(space, c)
    return cross4(e1, e2, N)


def vertex_normals(s, space):
    """Unit normals of the surface inside the ambient three-manifold.

    Corner contributions use Max's weights (cross product of the two corner
    edges over the product of their squared lengths), exact for vertices
    on a round sphere; in four dimensions the cross product is taken with
    the ambient unit normal at the vertex and the result is projected to
    the ambient tangent space.
    """
    v = s.vertices
    t = s.triangles
    vn = np.zeros_like(v)
    Nv = None if v.shape[1] == 3 else unit_normal(space, v)
    for k in range(3):
        i, j, l = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e1 = v[j] - v[i]
        e2 = v[l] - v[i]
        w = 1.0 / (np.einsum("ij,ij->i", e1, e1) * np.einsum("ij,ij->i", e2, e2))
        c = np.cross(e1, e2) if Nv is None else cross4(e1, e2, Nv[i])
        np.add.at(vn, i, w[:, None] * c)
    if Nv is not None:
        vn = project_tangent(space, v, vn)
    return vn / np.linalg.norm(vn, axis=1, keepdims=True)


def normal_graph(s, space, height, normals=None, check=True):
    """Push each vertex along its unit normal through the exponential map.

    ``height`` is a scalar or per-vertex array.  The marked vertex maps to its
    image.  Raises :class:`FoldError` if any triangle flips orientation.
    """
    if space is None:
        space = euclidean()
    h = np.broadcast_to(np.asarray(height, dtype=float), (s.n_vertices,))
    if not np.any(h):
        return s.with_vertices(s.vertices)
    nu = vertex_normals(s, space) if normals is None else normals
    new = exp_map(space, s.vertices, h[:, None] * nu)
    if check:
        before = _face_normals(s, space)
        after = _face_normals(s, space, new)
        if np.any(np.sum(before * after, axis=1) <= 0):
            raise FoldError("normal graph folds: %d triangles flipped"
                            % int(np.sum(np.sum(before * after, axis=1) <= 0)))
    return s.with_vertices(new)


# ----------------------------------------------------------------------------
# ascii mesh format

def save_mesh(path, s, space, attributes=None):
    """Write vertices, faces, marked vertex and optional per-vertex scalars."""
    attributes = attributes or {}
    names = list(attributes)
    with open(path, "w") as fh:
        fh.write("# minsphere-mesh %s\n" % json.dumps(space.to_json(), sort_keys=True))
        fh.write("# attributes %s\n" % " ".join(names))
        for k, p in enumerate(s.vertices):
            extra = [repr(float(attributes[n][k])) for n in names]
            fh.write("v " + " ".join(repr(float(x)) for x in p)
                     + ("" if not extra else " " + " ".join(extra)) + "\n")
        for a, b, c in s.triangles:
            fh.write("f %d %d %d\n" % (a, b, c))
        if s.marked is not None:
            fh.write("m %d\n" % s.marked)


def load_mesh(path):
    """Read a mesh written by :func:`save_mesh`; returns (surface, space, attributes)."""
    space, names = None, []
    verts, attrs, tris, marked = [], [], [], None
    dim = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# minsphere-mesh"):
                space = space_from_json(line.split(" ", 2)[2])
                dim = space.dim
            elif line.startswith("# attributes"):
                names = line.split()[2:]
            elif line.startswith("v "):
                vals = [float(x) for x in line.split()[1:]]
                verts.append(vals[:dim])
                attrs.append(vals[dim:])
            elif line.startswith("f "):
                tris.append([int(x) for x in line.split()[1:4]])
            elif line.startswith("m "):
                marked = int(line.split()[1])
    if space is None:
        raise MeshError("missing header line")
    attrs = np.array(attrs) if names else np.zeros((len(verts), 0))
    return (TriSurface(verts, tris, marked=marked), space,
            {n: attrs[:, k] for k, n in enumerate(names)})


# ----------------------------------------------------------------------------
# axisymmetric profiles

class AxiProfile:
    """Meridian polyline (x, r) of a surface of revolution about the x-axis.

    Runs from the pole with smaller x to the other pole, r = 0 exactly at
    both ends and r > 0 inside.  Mean curvature uses H = k1 + k2 with the
    outward normal, so the unit sphere has H = 2.
    """

    def __init__(self, x, r, validate=True):
        self.x = np.array(x, dtype=float)
        self.r = np.array(r, dtype=float)
        if validate:
            self._validate()

    def _validate(self):
        if len(self.x) < 3 or self.r[0] != 0.0 or self.r[-1] != 0.0:
            raise MeshError("profile must start and end on the axis")
        if np.any(self.r[1:-1] <= 0):
            raise MeshError("profile touches the axis in the interior")
        from shapely.geometry import LineString
        if not LineString(np.column_stack([self.x, self.r])).is_simple:
            raise MeshError("profile self-intersects")

    @property
    def points(self):
        return np.column_stack([self.x, self.r])

    def arclength(self):
        seg = np.hypot(np.diff(self.x), np.diff(self.r))
        return np.concatenate([[0.0], np.cumsum(seg)])

    def curvatures(self):
        """Meridian and rotational principal curvatures at every sample."""
        P = self.points
        n = len(P)
        km = np.empty(n)
        kr = np.empty(n)
        a = P[1:-1] - P[:-2]
        b = P[2:] - P[1:-1]
        ab = P[2:] - P[:-2]
        cr = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        km[1:-1] = -2 * cr / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
                              * np.linalg.norm(ab, axis=1))
        T = ab / np.linalg.norm(ab, axis=1, keepdims=True)
        kr[1:-1] = T[:, 0] / self.r[1:-1]
        for end, nb in ((0, 1), (n - 1, n - 2)):
            dx = abs(P[nb, 0] - P[end, 0])
            k = 2 * dx / (P[nb, 1] ** 2 + dx * dx)
            km[end] = kr[end] = k
        return km, kr

    def mean_curvature(self):
        km, kr = self.curvatures()
        return km + kr

    def area(self):
        seg = np.hypot(np.diff(self.x), np.diff(self.r))
        return float(np.sum(np.pi * (self.r[1:] + self.r[:-1]) * seg))

    def volume(self):
        r0, r1 = self.r[:-1], self.r[1:]
        return float(np.sum(np.pi / 3 * np.diff(self.x) * (r0 * r0 + r0 * r1 + r1 * r1)))

    def polygon(self):
        """Meridian region mirrored across the axis, as a closed (m, 2) ring."""
        top = self.points
        bot = top[-2:0:-1] * np.array([1.0, -1.0])
        return np.vstack([top, bot])
