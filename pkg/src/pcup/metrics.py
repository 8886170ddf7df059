"""Evaluation metrics for point sets: Chamfer and Hausdorff distances,
exact and auction-based earth mover's distance, point-to-surface
statistics, and the uniformity measure used both for evaluation and as a
training-loss backbone.

The uniformity measure crops subsets S_j around sampled seeds, compares
each subset's size against the expected count n_hat = |Q| * p
(imbalance), and compares nearest-neighbor spacing inside the subset
against the ideal hexagonal-packing spacing d_hat (clutter). The final
value sums imbalance * clutter over subsets.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .geometry import SpatialIndex, as_points, farthest_point_sampling, pairwise_distances
from .mesh import PatchGrower, area_weighted_sample

__all__ = [
    "P_VALUES",
    "Matching",
    "UniformityReport",
    "chamfer_distance",
    "hausdorff_distance",
    "emd_exact",
    "emd_approx",
    "earth_movers_distance",
    "expected_ball_count",
    "hexagonal_neighbor_spacing",
    "uniformity_subsets",
    "uniformity_loss_value",
    "uniformity_report_mesh",
    "point_to_surface_stats",
    "REPORT_HEADER",
    "write_report_csv",
]

P_VALUES = (0.004, 0.006, 0.008, 0.010, 0.012)

EMD_EXACT_LIMIT = 512  # cubic assignment stays fast up to here


def _check_pair(a, b):
    a = as_points(a, "A")
    b = as_points(b, "B")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty input")
    return a, b


def _nearest_distances(src, dst):
    """Distance from every src point to its nearest dst point, recomputed
    in plain numpy after a kd-tree index lookup."""
    idx = cKDTree(dst).query(src)[1]
    return np.linalg.norm(src - dst[idx], axis=1)


def chamfer_distance(a, b):
    """0.5 * (mean nearest-neighbor distance A->B + mean B->A)."""
    a, b = _check_pair(a, b)
    return 0.5 * (float(_nearest_distances(a, b).mean()) + float(_nearest_distances(b, a).mean()))


def hausdorff_distance(a, b):
    """max(max nearest-neighbor distance A->B, max B->A)."""
    a, b = _check_pair(a, b)
    return max(float(_nearest_distances(a, b).max()), float(_nearest_distances(b, a).max()))


@dataclass
class Matching:
    """A bijection between two equal-size point sets: permutation[i] is
    the B index matched to A point i; cost is the summed L2 distance."""

    permutation: np.ndarray
    cost: float


def emd_exact(a, b):
    """Minimum-cost bijection under L2 costs via the assignment
    algorithm. Globally optimal; limited to 512 points."""
    a, b = _check_pair(a, b)
    if len(a) != len(b):
        raise ValueError(f"size mismatch: {len(a)} vs {len(b)}")
    if len(a) > EMD_EXACT_LIMIT:
        raise ValueError(
            f"emd_exact supports up to {EMD_EXACT_LIMIT} points, got {len(a)}; use emd_approx"
        )
    d = pairwise_distances(a, b)
    rows, cols = linear_sum_assignment(d)
    return Matching(cols.astype(np.intp), float(d[rows, cols].sum()))


def emd_approx(a, b, epsilon=1e-3):
    """Auction-algorithm bijection with a primal-dual optimality
    certificate: iterate epsilon scaling until the assignment cost is
    within `epsilon` (relative) of a dual lower bound on the optimum.

    The cost is therefore always >= the exact optimum and at most
    (1 + epsilon) times it. Inputs are canonicalized by lexicographic
    sort, so permuting either input's point order cannot change the cost.
    """
    a, b = _check_pair(a, b)
    n = len(a)
    if n != len(b):
        raise ValueError(f"size mismatch: {n} vs {len(b)}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if n == 1:
        return Matching(np.zeros(1, dtype=np.intp), float(np.linalg.norm(a[0] - b[0])))
    ia = np.lexsort((a[:, 2], a[:, 1], a[:, 0]))
    ib = np.lexsort((b[:, 2], b[:, 1], b[:, 0]))
    d = pairwise_distances(a[ia], b[ib])
    assign = _auction_assignment(d, epsilon)
    cost = float(d[np.arange(n), assign].sum())
    permutation = np.empty(n, dtype=np.intp)
    permutation[ia] = ib[assign]
    return Matching(permutation, cost)


def _auction_assignment(d, epsilon):
    """Jacobi auction with epsilon scaling on a dense cost matrix.

    Each phase produces a complete assignment satisfying eps-complementary
    slackness against the current prices; the duality gap then certifies
    how far the assignment can be from optimal. Prices warm-start the next
    phase."""
    n = d.shape[0]
    prices = np.zeros(n)
    eps_run = max(float(d.max()), 1e-12) / 4.0
    eps_floor = 1e-15 * max(1.0, float(d.max()))
    while True:
        assign = _auction_phase(d, prices, eps_run)
        primal = float(d[np.arange(n), assign].sum())
        dual = float((d + prices[None, :]).min(axis=1).sum() - prices.sum())
        if primal - dual <= epsilon * primal + 1e-12:
            return assign
        if eps_run < eps_floor:
            return assign  # gap is floating-point noise at this point
        eps_run /= 5.0


def _auction_phase(d, prices, eps):
    n = d.shape[0]
    owner = np.full(n, -1, dtype=np.intp)  # object -> person
    assign = np.full(n, -1, dtype=np.intp)  # person -> object
    while True:
        bidders = np.nonzero(assign < 0)[0]
        if bidders.size == 0:
            return assign
        costs = d[bidders] + prices[None, :]
        two = np.argpartition(costs, 1, axis=1)[:, :2]
        vals = np.take_along_axis(costs, two, axis=1)
        first_min = vals[:, 0] <= vals[:, 1]
        best_obj = np.where(first_min, two[:, 0], two[:, 1])
        best_val = np.minimum(vals[:, 0], vals[:, 1])
        second_val = np.maximum(vals[:, 0], vals[:, 1])
        bids = prices[best_obj] + (second_val - best_val) + eps
        # Highest bid per object wins; ties go to the lowest person index.
        order = np.lexsort((bidders, -bids, best_obj))
        firsts = order[np.unique(best_obj[order], return_index=True)[1]]
        win_objs = best_obj[firsts]
        win_people = bidders[firsts]
        displaced = owner[win_objs]
        assign[displaced[displaced >= 0]] = -1
        owner[win_objs] = win_people
        assign[win_people] = win_objs
        prices[win_objs] = bids[firsts]


def earth_movers_distance(a, b, epsilon=1e-3):
    """Dispatcher: exact assignment up to 512 points, auction beyond."""
    a, b = _check_pair(a, b)
    if len(a) <= EMD_EXACT_LIMIT:
        return emd_exact(a, b)
    return emd_approx(a, b, epsilon)


# ---------------------------------------------------------------------------
# uniformity


def expected_ball_count(n_points, p):
    """Expected subset size n_hat = |Q| * p for an area fraction p."""
    return n_points * p


def hexagonal_neighbor_spacing(radius, subset_size):
    """Ideal nearest-neighbor spacing d_hat for `subset_size` points
    hexagonally packed in a disk of the given radius."""
    return math.sqrt(2.0 * math.pi * radius * radius / (subset_size * math.sqrt(3.0)))


def uniformity_subsets(points, p, seed_count, rng):
    """Freeze the discrete structure of the uniformity measure.

    Picks min(seed_count, n) seeds by farthest point sampling from an
    rng-chosen start, crops the closed ball of radius sqrt(p) around each
    seed, and records each member's nearest neighbor inside its subset.

    Returns (r_d, n_hat, subsets) where each subset is a tuple
    (member indices, nearest-neighbor indices or None, d_hat).
    """
    pts = as_points(points)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if seed_count < 1:
        raise ValueError(f"seed_count must be >= 1, got {seed_count}")
    rng = np.random.default_rng(rng)
    n = len(pts)
    r_d = math.sqrt(p)
    n_hat = expected_ball_count(n, p)
    index = SpatialIndex(pts)
    start = int(rng.integers(n))
    seeds = farthest_point_sampling(pts, min(seed_count, n), start)
    subsets = []
    for s in seeds:
        members = index.ball_query(pts[s], r_d)
        if len(members) >= 2:
            inner = pairwise_distances(pts[members], pts[members])
            np.fill_diagonal(inner, np.inf)
            nn = members[np.argmin(inner, axis=1)]
            d_hat = hexagonal_neighbor_spacing(r_d, len(members))
        else:
            nn = None
            d_hat = 0.0
        subsets.append((members, nn, d_hat))
    return r_d, n_hat, subsets


def _subset_value(pts, n_hat, members, nn, d_hat):
    imbalance = (len(members) - n_hat) ** 2 / n_hat
    if nn is None:
        return 0.0  # no nearest neighbor exists, clutter is defined as 0
    gaps = np.linalg.norm(pts[members] - pts[nn], axis=1)
    clutter = float((((gaps - d_hat) ** 2) / d_hat).sum())
    return imbalance * clutter


def uniformity_loss_value(points, p, seed_count, rng):
    """Scalar uniformity value at one area fraction p: the sum over
    subsets of imbalance * clutter. Zero only for subsets that match both
    the expected count and the hexagonal spacing exactly."""
    pts = as_points(points)
    _, n_hat, subsets = uniformity_subsets(pts, p, seed_count, rng)
    return float(sum(_subset_value(pts, n_hat, m, nn, dh) for m, nn, dh in subsets))


@dataclass
class UniformityReport:
    """Uniformity values keyed by area fraction p, plus the seed count
    used to compute them."""

    values: dict
    seed_count: int

    def ordered_values(self):
        return [self.values[p] for p in sorted(self.values)]


def uniformity_report_mesh(points, mesh, seed_count=1000, rng=0, pool_size=20000,
                           graph_k=10, p_values=P_VALUES, chunk=128):
    """Uniformity evaluated with geodesic crops on the actual surface.

    Seeds are drawn uniformly from a dense area-weighted pool; each query
    point is attached to its nearest pool point; subset S_j holds the
    query points whose attachment lies within graph distance R_p of seed
    j, where pi * R_p^2 = p * total_area (the geodesic disk covering an
    area fraction p). The formula then matches uniformity_loss_value with
    d_hat computed from R_p.
    """
    pts = as_points(points)
    rng = np.random.default_rng(rng)
    pool = area_weighted_sample(mesh, pool_size, rng)
    grower = PatchGrower(pool, k=graph_k)
    attach = cKDTree(pool.positions).query(pts)[1]
    n = len(pts)
    radii = {p: math.sqrt(p * mesh.total_area / math.pi) for p in p_values}
    limit = max(radii.values()) * (1.0 + 1e-9)
    seeds = rng.choice(len(pool), size=min(seed_count, len(pool)), replace=False)
    totals = {p: 0.0 for p in p_values}
    for lo in range(0, len(seeds), chunk):
        block = seeds[lo : lo + chunk]
        dists = np.atleast_2d(grower.distances_from(block, limit=limit))
        for row in dists:
            reach = row[attach]  # graph distance of each query point's attachment
            for p in p_values:
                members = np.nonzero(reach <= radii[p])[0]
                if len(members) < 2:
                    continue  # clutter 0, contributes nothing
                inner = pairwise_distances(pts[members], pts[members])
                np.fill_diagonal(inner, np.inf)
                nn = members[np.argmin(inner, axis=1)]
                d_hat = hexagonal_neighbor_spacing(radii[p], len(members))
                n_hat = expected_ball_count(n, p)
                totals[p] += _subset_value(pts, n_hat, members, nn, d_hat)
    return UniformityReport(totals, len(seeds))


# ---------------------------------------------------------------------------
# point-to-surface and reporting


def point_to_surface_stats(points, mesh):
    """(mean, max) distance from each point to the mesh surface."""
    d = mesh.distances_to_surface(points)
    return float(d.mean()), float(d.max())


REPORT_HEADER = "name,cd,hd,p2f_mean,uni_p0.4pct,uni_p0.6pct,uni_p0.8pct,uni_p1.0pct,uni_p1.2pct"


def write_report_csv(path, rows):
    """Write evaluation rows: each row is (name, cd, hd, p2f_mean,
    UniformityReport). Values are written in full precision; presentation
    scaling is left to callers."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(REPORT_HEADER + "\n")
        for name, cd, hd, p2f_mean, report in rows:
            uni = ",".join(repr(v) for v in report.ordered_values())
            fh.write(f"{name},{cd!r},{hd!r},{p2f_mean!r},{uni}\n")
