"""Point-cloud substrate: exact spatial queries, farthest point sampling,
unit-sphere normalization, and XYZ file I/O.

Point clouds are plain (n, 3) float64 numpy arrays. SpatialIndex wraps a
kd-tree but guarantees brute-force-exact answers: the tree only proposes
candidates, and membership, distances, and ordering are all recomputed
with plain numpy arithmetic. Ties are broken by lower point index, which
makes every query deterministic.
"""

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "as_points",
    "SpatialIndex",
    "farthest_point_sampling",
    "normalize_unit_sphere",
    "denormalize",
    "pairwise_distances",
    "read_xyz",
    "write_xyz",
]


def as_points(a, name="points"):
    """Validate `a` as an (n, 3) float64 array and return it.

    Raises ValueError on wrong shape or non-finite coordinates.
    """
    pts = np.asarray(a, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name}: expected an (n, 3) array, got shape {pts.shape}")
    if pts.size and not np.isfinite(pts).all():
        raise ValueError(f"{name}: non-finite coordinates")
    return pts


def pairwise_distances(a, b):
    """Full (len(a), len(b)) matrix of Euclidean distances."""
    a = as_points(a, "a")
    b = as_points(b, "b")
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


class SpatialIndex:
    """Immutable exact-query index over a fixed point set.

    Candidate sets come from a kd-tree whose search radius is padded by a
    relative epsilon, so floating-point differences between the tree's
    internal distance arithmetic and numpy's can only add candidates,
    never drop a true answer. The final answer is computed from exact
    numpy distances sorted by (distance, index).
    """

    def __init__(self, points):
        pts = as_points(points)
        if len(pts) == 0:
            raise ValueError("empty input")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)

    def _exact_sorted(self, candidates, query):
        cand = np.asarray(candidates, dtype=np.intp)
        diff = self.points[cand] - query
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        order = np.lexsort((cand, dist))
        return cand[order], dist[order]

    def knn(self, query, k):
        """The k nearest indexed points, ascending by (distance, index).

        Returns (indices, distances) as parallel arrays of length k.
        """
        q = np.asarray(query, dtype=np.float64).reshape(3)
        n = len(self.points)
        if not 1 <= k <= n:
            raise ValueError(f"k={k} out of range for {n} indexed points")
        tree_dist = np.atleast_1d(self._tree.query(q, k=k)[0])
        kth = float(tree_dist[-1])
        radius = kth * (1.0 + 1e-9) + 1e-12
        cand, dist = self._exact_sorted(self._tree.query_ball_point(q, radius), q)
        return cand[:k], dist[:k]

    def ball_query(self, center, radius):
        """Indices of all points within the closed ball, sorted by
        (distance, index). Radius must be positive."""
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        c = np.asarray(center, dtype=np.float64).reshape(3)
        padded = radius * (1.0 + 1e-9) + 1e-12
        cand, dist = self._exact_sorted(self._tree.query_ball_point(c, padded), c)
        return cand[dist <= radius]

    def nearest(self, query):
        """Index and distance of the single nearest point."""
        idx, dist = self.knn(query, 1)
        return int(idx[0]), float(dist[0])


def farthest_point_sampling(points, k, seed_index=0):
    """Greedy max-min subset selection.

    The first pick is `seed_index`; every later pick maximizes the
    distance to the already-selected set, with ties broken by lower
    index. Returns the k selected indices in pick order.
    """
    pts = as_points(points)
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    if not 0 <= seed_index < n:
        raise ValueError(f"seed_index={seed_index} out of range for {n} points")
    selected = np.empty(k, dtype=np.intp)
    selected[0] = seed_index
    mindist = np.linalg.norm(pts - pts[seed_index], axis=1)
    mindist[seed_index] = -1.0  # selected points can never win the argmax
    for i in range(1, k):
        nxt = int(np.argmax(mindist))  # first occurrence = lowest index on ties
        selected[i] = nxt
        np.minimum(mindist, np.linalg.norm(pts - pts[nxt], axis=1), out=mindist)
        mindist[nxt] = -1.0
    return selected


def normalize_unit_sphere(points):
    """Center at the centroid and scale so the farthest point has norm 1.

    Returns (normalized points, centroid, scale). A cloud of identical
    points gets scale 1 so the transform is always invertible.
    """
    pts = as_points(points)
    if len(pts) == 0:
        raise ValueError("empty input")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.linalg.norm(centered, axis=1).max())
    if scale == 0.0:
        scale = 1.0
    return centered / scale, centroid, scale


def denormalize(points, centroid, scale):
    """Invert normalize_unit_sphere."""
    return as_points(points) * float(scale) + np.asarray(centroid, dtype=np.float64)


def read_xyz(path):
    """Read an ASCII XYZ file: one point per line, three whitespace-
    separated reals; blank lines and lines starting with '#' are skipped.
    Parse errors report the 1-based line number."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 3 values per line, got {len(parts)}"
                )
            try:
                rows.append([float(t) for t in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in {parts!r}") from None
            if not all(np.isfinite(rows[-1])):
                raise ValueError(f"{path}:{lineno}: non-finite coordinate")
    if not rows:
        return np.zeros((0, 3), dtype=np.float64)
    return np.asarray(rows, dtype=np.float64)


def write_xyz(path, points):
    """Write points as ASCII XYZ with 6 significant digits."""
    pts = as_points(points)
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in pts:
            fh.write(f"{x:.6g} {y:.6g} {z:.6g}\n")
