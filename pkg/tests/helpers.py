"""Shared test utilities: independent brute-force oracles and small
procedural fixture meshes. Oracles are written with none of the package
shortcuts so they can disagree with the implementation."""

import itertools
import math

import numpy as np

from pcup import autodiff as ad

# ---------------------------------------------------------------------------
# brute-force oracles


def brute_knn(points, query, k):
    """k nearest indices by exhaustive sort on (distance, index)."""
    d = np.linalg.norm(points - query, axis=1)
    order = sorted(range(len(points)), key=lambda i: (d[i], i))
    return np.array(order[:k])


def brute_ball(points, query, radius):
    """Closed-ball membership by exhaustive comparison."""
    d = np.linalg.norm(points - query, axis=1)
    hits = [i for i in range(len(points)) if d[i] <= radius]
    return np.array(sorted(hits, key=lambda i: (d[i], i)))


def brute_fps(points, k, seed_index=0):
    """Greedy farthest point sampling, straightforward O(n*k) loop."""
    chosen = [seed_index]
    dist = np.linalg.norm(points - points[seed_index], axis=1)
    dist[seed_index] = -np.inf
    while len(chosen) < k:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        d_new = np.linalg.norm(points - points[nxt], axis=1)
        dist = np.minimum(dist, d_new)
        dist[nxt] = -np.inf
    return np.array(chosen)


def brute_assignment_cost(a, b):
    """Optimal bijection cost by trying every permutation (len <= 8)."""
    n = len(a)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(d[i, perm[i]] for i in range(n))
        best = min(best, cost)
    return best


def brute_point_triangle(p, a, b, c, grid=400):
    """Min distance from p to triangle abc by dense barycentric search.
    Accurate to ~edge/grid; use as a loose oracle only."""
    u = np.linspace(0.0, 1.0, grid)
    best = math.inf
    for s in u:
        t = np.linspace(0.0, 1.0 - s, max(2, int((1.0 - s) * grid) + 1))
        pts = a[None, :] + s * (b - a)[None, :] + t[:, None] * (c - a)[None, :]
        best = min(best, float(np.linalg.norm(pts - p, axis=1).min()))
    return best


def gradcheck(make_loss, params, names=None, h=1e-4, rel_tol=1e-3, max_entries=None, rng=None):
    """Central-difference check of every requested parameter gradient.

    make_loss must rebuild the scalar loss Node from the current
    parameter values. Returns the worst relative error seen."""
    names = list(names if names is not None else params.names())
    loss = make_loss()
    ad.backward(loss)
    analytic = {}
    for name in names:
        grad = params[name].grad
        analytic[name] = np.zeros_like(params[name].value) if grad is None else grad.copy()
    params.zero_grad()
    worst = 0.0
    for name in names:
        v = params[name].value
        entries = list(np.ndindex(v.shape))
        if max_entries is not None and len(entries) > max_entries:
            picks = (rng or np.random.default_rng(0)).choice(
                len(entries), size=max_entries, replace=False
            )
            entries = [entries[i] for i in picks]
        for idx in entries:
            orig = v[idx]
            v[idx] = orig + h
            up = float(make_loss().value[0, 0])
            v[idx] = orig - h
            dn = float(make_loss().value[0, 0])
            v[idx] = orig
            fd = (up - dn) / (2.0 * h)
            an = analytic[name][idx]
            err = abs(fd - an) / max(1.0, abs(fd), abs(an))
            worst = max(worst, err)
            assert err <= rel_tol, (
                f"gradient mismatch at {name}{list(idx)}: "
                f"analytic {an!r} vs finite-diff {fd!r} (rel {err:.2e})"
            )
    return worst


# ---------------------------------------------------------------------------
# fixture meshes


def off_text(verts, faces):
    lines = ["OFF", f"{len(verts)} {len(faces)} 0"]
    lines += [" ".join(f"{c:.17g}" for c in v) for v in verts]
    lines += ["3 " + " ".join(str(i) for i in f) for f in faces]
    return "\n".join(lines) + "\n"


def ply_text(verts, faces):
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(verts)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines += [" ".join(f"{c:.17g}" for c in v) for v in verts]
    lines += ["3 " + " ".join(str(i) for i in f) for f in faces]
    return "\n".join(lines) + "\n"


def tetrahedron():
    """Regular tetrahedron inscribed in the unit sphere."""
    s = 1.0 / math.sqrt(3.0)
    verts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) * s
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return verts, faces


def icosphere(subdivisions=2):
    """Unit sphere approximated by a subdivided icosahedron
    (20 * 4**subdivisions faces)."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.array(verts[i]) + np.array(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return np.array(verts), np.array(faces)


def two_triangles():
    """Two coplanar triangles with areas 1 and 3 (for weighting tests)."""
    verts = np.array(
        [
            [0, 0, 0], [2, 0, 0], [0, 1, 0],  # area 1
            [10, 0, 0], [12, 0, 0], [10, 3, 0],  # area 3
        ],
        dtype=float,
    )
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    return verts, faces


def planar_grid(cells=10, width=1.0, height=1.0):
    """Flat rectangle triangulated into a regular grid."""
    xs = np.linspace(0.0, width, cells + 1)
    ys = np.linspace(0.0, height, cells + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs])
    faces = []
    stride = cells + 1
    for j in range(cells):
        for i in range(cells):
            v0 = j * stride + i
            faces.append([v0, v0 + 1, v0 + stride])
            faces.append([v0 + 1, v0 + stride + 1, v0 + stride])
    return verts, np.array(faces)


def bent_sheet(gap=0.05, cells=20):
    """Two long parallel strips joined only at one end.

    Points on opposite strips near the free end are `gap` apart in space
    but nearly two units apart along the surface — the canonical trap for
    Euclidean patch growing."""
    strip_w = 0.1
    xs = np.linspace(0.0, 1.0, cells + 1)
    ys = np.linspace(0.0, strip_w, 3)
    verts = []
    for z in (0.0, gap):
        for y in ys:
            for x in xs:
                verts.append([x, y, z])
    verts = np.array(verts)
    stride = cells + 1
    per_strip = 3 * stride
    faces = []
    for base in (0, per_strip):
        for j in range(2):
            for i in range(cells):
                v0 = base + j * stride + i
                faces.append([v0, v0 + 1, v0 + stride])
                faces.append([v0 + 1, v0 + stride + 1, v0 + stride])
    # fold: join the x=1 edges of the two strips
    for j in range(2):
        a = j * stride + cells            # strip 0, row j, x=1
        b = (j + 1) * stride + cells
        a2 = per_strip + j * stride + cells
        b2 = per_strip + (j + 1) * stride + cells
        faces.append([a, b, a2])
        faces.append([b, b2, a2])
    return verts, np.array(faces)


def quad_off_text():
    """OFF file with a quad face — must be rejected."""
    return "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"


def binary_ply_bytes():
    """Minimal binary-format PLY — must be rejected."""
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        "element vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
        "end_header\n"
    )
    return header.encode("ascii") + np.zeros(3, dtype="<f4").tobytes()
