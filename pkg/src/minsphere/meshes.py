"""Closed triangle meshes of spheres, triaxial ellipsoids and flat discs.

Two generators are provided.  ``icosphere`` gives near-uniform meshes of the
unit sphere with a vertex at each of the poles (0, 0, +-1).  ``ring_mesh``
builds meshes out of latitude rings around an axis, which lets the ring
spacing be graded geometrically near the first pole (needed for the
logarithmic necks of the two-parameter families) and keeps triangles
isotropic on elongated ellipsoids.
"""

import numpy as np


def _icosahedron():
    z = 1.0 / np.sqrt(5.0)
    r = 2.0 / np.sqrt(5.0)
    top = [(0.0, 0.0, 1.0)]
    upper = [(r * np.cos(2 * np.pi * k / 5), r * np.sin(2 * np.pi * k / 5), z) for k in range(5)]
    lower = [(r * np.cos(2 * np.pi * (k + 0.5) / 5), r * np.sin(2 * np.pi * (k + 0.5) / 5), -z)
             for k in range(5)]
    verts = np.array(top + upper + lower + [(0.0, 0.0, -1.0)])
    tris = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        tris.append((0, u0, u1))
        tris.append((u0, l0, u1))
        tris.append((u1, l0, l1))
        tris.append((11, l1, l0))
    return verts, np.array(tris)


def icosphere(level):
    """Subdivided icosahedron projected to the unit sphere.

    Level k has 20 * 4**k triangles (level 5: 20480).
    """
    verts, tris = _icosahedron()
    verts = list(map(tuple, verts))
    for _ in range(level):
        cache = {}
        new = []

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = (np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = np.array(new)
    v = np.array(verts)
    return v, orient_outward(v, np.asarray(tris))


def orient_outward(verts, tris, center=None):
    """Flip a consistently oriented closed mesh so its normals point outward.

    Decided globally by the sign of the enclosed volume about ``center``.
    """
    v = np.asarray(verts, dtype=float)
    c = v.mean(axis=0) if center is None else np.asarray(center)
    p = v[tris] - c
    vol = np.sum(p[:, 0] * np.cross(p[:, 1], p[:, 2]))
    return tris.copy() if vol > 0 else tris[:, [0, 2, 1]].copy()


def _stitch(I, a, J, b):
    """Triangulate the band between two closed rings (zipper by angle)."""
    n, m = len(I), len(J)
    a = np.append(a, a[0] + 2 * np.pi)
    b = np.append(b, b[0] + 2 * np.pi)
    p = q = 0
    out = []
    while p < n or q < m:
        if q == m or (p < n and a[p + 1] <= b[q + 1]):
            out.append((I[p % n], I[(p + 1) % n], J[q % m]))
            p += 1
        else:
            out.append((I[p % n], J[(q + 1) % m], J[q % m]))
            q += 1
    return out


def rings_mesh(rings, angles, first_pole, last_pole):
    """Assemble a sphere-type mesh from closed rings between two pole points.

    ``rings`` is a list of (m_k, dim) arrays, ``angles`` the matching
    azimuths (increasing, first entry in [0, 2 pi)).
    ``last_pole`` may be None for a disc (open boundary on the last ring).
    """
    verts = [np.asarray(first_pole, dtype=float)[None, :]]
    idx = []
    start = 1
    for r in rings:
        idx.append(np.arange(start, start + len(r)))
        verts.append(r)
        start += len(r)
    tris = []
    m0 = len(idx[0])
    tris += [(0, idx[0][(k + 1) % m0], idx[0][k]) for k in range(m0)]
    for k in range(len(rings) - 1):
        tris += _stitch(idx[k], angles[k], idx[k + 1], angles[k + 1])
    if last_pole is not None:
        verts.append(np.asarray(last_pole, dtype=float)[None, :])
        pole = start
        m1 = len(idx[-1])
        tris += [(pole, idx[-1][k], idx[-1][(k + 1) % m1]) for k in range(m1)]
    return np.vstack(verts), np.array(tris)


def _theta_nodes(A, Bm, h, grade_min=None, m_pole=48, Bmin=None, curv_frac=0.15):
    """Polar-angle nodes with arc spacing ~h.

    Spacing is reduced to ``curv_frac`` times the meridian radius of
    curvature where that is smaller (the tips of elongated ellipsoids), and
    optionally graded geometrically near theta = 0.
    """
    Bmin = Bm if Bmin is None else Bmin
    th = np.linspace(0.0, np.pi, 20001)
    q2 = (A * np.sin(th)) ** 2 + (Bm * np.cos(th)) ** 2
    ds = np.sqrt(q2)
    # meridian radius of curvature, using the thinner cross-section semiaxis
    Rc = ((A * np.sin(th)) ** 2 + (Bmin * np.cos(th)) ** 2) ** 1.5 / (A * Bmin)
    hloc = np.minimum(h, curv_frac * Rc)
    dn = ds / hloc
    n_of = np.concatenate([[0.0], np.cumsum(0.5 * (dn[1:] + dn[:-1]) * np.diff(th))])
    n = max(int(np.ceil(n_of[-1])), 4)
    nodes = np.interp(np.linspace(0, n_of[-1], n + 1)[1:-1], n_of, th)
    if grade_min is None:
        return nodes
    # geometric rings near the first pole: spacing ratio matches the azimuthal step
    q = 1.0 + 2.0 * np.pi / m_pole
    g = [grade_min / Bm]
    while g[-1] * (q - 1.0) * Bm < h and g[-1] < np.pi / 2:
        g.append(g[-1] * q)
    g = np.array(g)
    return np.concatenate([g, nodes[nodes > g[-1] + 0.5 * h / Bm]])


def _spacing_at(A, Bmin, t, h, curv_frac=0.15):
    Rc = ((A * np.sin(t)) ** 2 + (Bmin * np.cos(t)) ** 2) ** 1.5 / (A * Bmin)
    return min(h, curv_frac * Rc)


def ring_mesh(axes, h, axis=2, grade_min=None, m_pole=48, m_min=8):
    """Triaxial ellipsoid mesh built from latitude rings around ``axis``.

    Parameters
    ----------
    axes : three semiaxes in coordinate order.
    h : target edge length.
    axis : coordinate of the polar axis; the first pole is at +axes[axis].
    grade_min : if given, the first ring sits at geodesic distance ~grade_min
        from the first pole and rings grow geometrically until they reach
        spacing h.
    """
    axes = np.asarray(axes, dtype=float)
    others = [k for k in range(3) if k != axis]
    A = axes[axis]
    B, C = axes[others[0]], axes[others[1]]
    Bm = 0.5 * (B + C)
    nodes = _theta_nodes(A, Bm, h, grade_min, m_pole, Bmin=min(B, C))
    rings, angles = [], []
    for k, t in enumerate(nodes):
        perim = 2 * np.pi * np.sin(t) * np.sqrt(0.5 * (B * B + C * C))
        hk = _spacing_at(A, min(B, C), t, h)
        m = max(m_min, m_pole if grade_min is not None else 0, int(round(perim / hk)))
        off = 0.5 * (k % 2) * 2 * np.pi / m
        phi = off + 2 * np.pi * np.arange(m) / m
        pts = np.zeros((m, 3))
        pts[:, axis] = A * np.cos(t)
        pts[:, others[0]] = B * np.sin(t) * np.cos(phi)
        pts[:, others[1]] = C * np.sin(t) * np.sin(phi)
        rings.append(pts)
        angles.append(phi)
    p0 = np.zeros(3)
    p0[axis] = A
    verts, tris = rings_mesh(rings, angles, p0, -p0)
    return verts, orient_outward(verts, tris, np.zeros(3))


def disc_mesh(radius, h, grade_min=None, m_pole=48, m_min=8):
    """Flat disc in the plane z = 0 centred at the origin (open boundary)."""
    if grade_min is None:
        radii = np.linspace(0, radius, max(int(np.ceil(radius / h)), 2) + 1)[1:]
    else:
        q = 1.0 + 2.0 * np.pi / m_pole
        g = [grade_min]
        while g[-1] * (q - 1.0) < h and g[-1] < radius:
            g.append(g[-1] * q)
        rest = np.arange(g[-1] + h, radius + 0.5 * h, h)
        radii = np.concatenate([g, rest])
        radii = radii[radii <= radius * (1 + 1e-12)]
        if radii[-1] < radius:
            radii = np.append(radii, radius)
    rings, angles = [], []
    for k, r in enumerate(radii):
        m = max(m_min, m_pole if grade_min is not None else 0, int(round(2 * np.pi * r / h)))
        off = 0.5 * (k % 2) * 2 * np.pi / m
        phi = off + 2 * np.pi * np.arange(m) / m
        rings.append(np.column_stack([r * np.cos(phi), r * np.sin(phi), np.zeros(m)]))
        angles.append(phi)
    verts, tris = rings_mesh(rings, angles, np.zeros(3), None)
    # counter-clockwise seen from +z
    p = verts[tris]
    nz = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])[:, 2]
    return verts, (tris if nz.sum() > 0 else tris[:, [0, 2, 1]].copy())


def refine(verts, tris, project=None):
    """One 1-to-4 midpoint subdivision; ``project`` maps new points to the surface."""
    verts = [tuple(v) for v in np.asarray(verts)]
    cache = {}
    new = []

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            verts.append(tuple(0.5 * (np.asarray(verts[i]) + np.asarray(verts[j]))))
            cache[key] = len(verts) - 1
        return cache[key]

    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    v = np.array(verts)
    if project is not None:
        v = project(v)
    return v, np.array(new)
