"""Feature interaction: similarity scoring, TopK selection, clustering, prompts.

All selection and clustering steps are fully deterministic: ties are broken
by flat row-major grid index, k-means uses farthest-point initialization
seeded on the extreme-score point, and no RNG is involved anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import GeometryError, ParamError
from .prompt_embed import PromptEmbedding
from .tensor_io import FeatureMap, ImageGeometry, PointPromptSet, PromptPoint

Polarity = Literal["most_similar", "least_similar"]

GridPoint = tuple[float, float, float]  # (row, col, score); row/col integral when snapped


@dataclass(frozen=True)
class SimilarityMap:
    """Per-cell cosine similarity between a prompt embedding and a feature map."""

    scores: np.ndarray  # float64, shape (H, W)

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParamError(f"similarity map must be 2-d and non-empty, got {arr.shape}")
        if arr.min() < -1.0 - 1e-6 or arr.max() > 1.0 + 1e-6:
            raise ParamError("similarity scores must lie in [-1, 1] (1e-6 slack)")
        object.__setattr__(self, "scores", arr)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class MatchParams:
    """TopK size and cluster count per polarity, plus clustering knobs."""

    k: int = 32
    c: int = 4
    kmeans_max_iters: int = 50
    snap_to_member: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ParamError(f"k must be >= 1, got {self.k}")
        if self.c < 1:
            raise ParamError(f"c must be >= 1, got {self.c}")
        if self.c > self.k:
            raise ParamError(f"c={self.c} must not exceed k={self.k}")
        if self.kmeans_max_iters < 1:
            raise ParamError(f"kmeans_max_iters must be >= 1, got {self.kmeans_max_iters}")


def cosine_similarity_map(
    embedding: PromptEmbedding, fm: FeatureMap, epsilon: float = 1e-12
) -> SimilarityMap:
    """Cosine similarity of the embedding against every grid cell."""
    if epsilon <= 0:
        raise ParamError(f"epsilon must be > 0, got {epsilon}")
    if embedding.channels != fm.channels:
        raise GeometryError(
            f"embedding has {embedding.channels} channels, feature map has {fm.channels}"
        )
    cells = fm.data.astype(np.float64)
    e = embedding.values
    dots = cells @ e
    cell_norms = np.sqrt((cells * cells).sum(axis=2))
    e_norm = float(np.sqrt(e @ e))
    scores = dots / (np.maximum(cell_norms, epsilon) * max(e_norm, epsilon))
    return SimilarityMap(scores)


def topk_coords(s: SimilarityMap, k: int, polarity: Polarity) -> list[GridPoint]:
    """The k extreme cells under the polarity, ties broken by flat index.

    Output is sorted by score (descending for most_similar, ascending for
    least_similar), then by flat row-major index ascending.
    """
    if polarity not in ("most_similar", "least_similar"):
        raise ParamError(f"unknown polarity {polarity!r}")
    n = s.height * s.width
    if not 1 <= k <= n:
        raise ParamError(f"k must be in [1, {n}], got {k}")
    flat = s.scores.ravel()
    idx = np.arange(n)
    key = -flat if polarity == "most_similar" else flat
    order = np.lexsort((idx, key))[:k]
    rows, cols = np.divmod(order, s.width)
    return [(int(r), int(col), float(flat[i])) for r, col, i in zip(rows, cols, order)]


def _lex_min(candidates: np.ndarray, coords: np.ndarray) -> int:
    # smallest (row, col) wins; equals flat row-major index order on a grid
    best = int(candidates[0])
    for i in candidates[1:]:
        if (coords[i, 0], coords[i, 1]) < (coords[best, 0], coords[best, 1]):
            best = int(i)
    return best


def _farthest_point_init(
    coords: np.ndarray, scores: np.ndarray, c: int, seed_on: str
) -> np.ndarray:
    extreme = scores.max() if seed_on == "max_score" else scores.min()
    seed_candidates = np.flatnonzero(scores == extreme)
    chosen = [_lex_min(seed_candidates, coords)]
    dist = ((coords - coords[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, c):
        dist[chosen] = -1.0  # sentinel: a chosen index is never re-picked
        far = np.flatnonzero(dist == dist.max())
        nxt = _lex_min(far, coords)
        chosen.append(nxt)
        dist = np.minimum(dist, ((coords - coords[nxt]) ** 2).sum(axis=1))
    return coords[chosen].astype(np.float64)


def _fix_empty_clusters(
    coords: np.ndarray, centers: np.ndarray, assign: np.ndarray, c: int
) -> None:
    """Reseed empty clusters in place with the point farthest from its center.

    Only points whose cluster keeps at least one other member are eligible,
    so filling one cluster can never empty another; by pigeonhole an eligible
    point always exists while any cluster is empty.
    """
    while True:
        counts = np.bincount(assign, minlength=c)
        empties = np.flatnonzero(counts == 0)
        if len(empties) == 0:
            return
        j = int(empties[0])
        own = ((coords - centers[assign]) ** 2).sum(axis=1)
        eligible = counts[assign] >= 2
        own = np.where(eligible, own, -np.inf)
        far = np.flatnonzero(own == own.max())
        steal = _lex_min(far, coords)
        assign[steal] = j
        centers[j] = coords[steal]


def _lloyd(
    coords: np.ndarray, scores: np.ndarray, c: int, max_iters: int, seed_on: str
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Deterministic Lloyd iterations; returns (centers, assignment, sse_history).

    At exit the assignment is always the one induced by the returned centers.
    """
    centers = _farthest_point_init(coords, scores, c, seed_on)
    sse_history: list[float] = []
    assign: np.ndarray | None = None
    for it in range(max_iters):
        dists = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        _fix_empty_clusters(coords, centers, new_assign, c)
        sse = float(((coords - centers[new_assign]) ** 2).sum())
        sse_history.append(sse)
        stable = assign is not None and np.array_equal(new_assign, assign)
        assign = new_assign
        if stable:
            break
        if it < max_iters - 1:
            for j in range(c):
                centers[j] = coords[assign == j].mean(axis=0)
    return centers, assign, sse_history


# exhaustive search is used instead of Lloyd whenever c**n stays below this
_EXACT_SEARCH_BUDGET = 8192

_assignment_cache: dict[tuple[int, int], np.ndarray] = {}


def _all_assignments(n: int, c: int) -> np.ndarray:
    key = (n, c)
    if key not in _assignment_cache:
        grids = np.meshgrid(*([np.arange(c)] * n), indexing="ij")
        _assignment_cache[key] = np.stack([g.ravel() for g in grids], axis=1)
    return _assignment_cache[key]


def _cluster_exact(
    coords: np.ndarray, scores: np.ndarray, c: int, snap: bool
) -> list[GridPoint]:
    """Globally optimal clustering of a tiny point set by enumeration.

    Minimizes medoid SSE when snapping (centers must be member points) and
    mean-center SSE otherwise. The first optimal assignment in enumeration
    order wins, so results are deterministic.
    """
    n = len(coords)
    assigns = _all_assignments(n, c)
    surjective = np.ones(len(assigns), dtype=bool)
    for j in range(c):
        surjective &= (assigns == j).any(axis=1)
    assigns = assigns[surjective]
    total = np.zeros(len(assigns))
    if snap:
        dist = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        for j in range(c):
            member = assigns == j
            cost = member @ dist
            cost[~member] = np.inf
            total += cost.min(axis=1)
    else:
        sq = (coords**2).sum(axis=1)
        for j in range(c):
            member = assigns == j
            cnt = member.sum(axis=1)
            sums = member @ coords
            total += member @ sq - (sums**2).sum(axis=1) / cnt
    best = assigns[int(total.argmin())]
    clusters = sorted(
        (np.flatnonzero(best == j) for j in range(c)),
        key=lambda m: (coords[_lex_min(m, coords), 0], coords[_lex_min(m, coords), 1]),
    )
    out: list[GridPoint] = []
    for members in clusters:
        if snap:
            cost = ((coords[members][:, None, :] - coords[members][None, :, :]) ** 2).sum(axis=2)
            per_medoid = cost.sum(axis=0)
            near = members[np.flatnonzero(per_medoid == per_medoid.min())]
            if len(near) > 1:
                near = near[np.abs(scores[near]) == np.abs(scores[near]).max()]
            pick = _lex_min(near, coords)
            out.append((int(coords[pick, 0]), int(coords[pick, 1]), float(scores[pick])))
        else:
            mu = coords[members].mean(axis=0)
            out.append((float(mu[0]), float(mu[1]), float(scores[members].mean())))
    return out


def cluster_points(
    points: Sequence[GridPoint],
    c: int,
    params: MatchParams | None = None,
    seed_on: Literal["max_score", "min_score"] = "max_score",
) -> list[GridPoint]:
    """Refine a point list into c cluster centers deterministically.

    Clustering runs on (row, col) coordinates only; scores ride along. Tiny
    instances (c**n within a fixed budget) are solved to global optimality by
    enumeration; larger ones run Lloyd k-means seeded on the extreme-score
    point (max or min per ``seed_on``) with farthest-point initialization.
    Every tie anywhere is broken by flat row-major index. With
    ``snap_to_member`` each final center is a member point (ties: higher
    absolute score, then flat index), so centers stay on the grid.
    """
    if c < 1:
        raise ParamError(f"c must be >= 1, got {c}")
    if len(points) < c:
        raise ParamError(f"cannot form {c} clusters from {len(points)} points")
    if seed_on not in ("max_score", "min_score"):
        raise ParamError(f"unknown seed_on {seed_on!r}")
    if params is None:
        params = MatchParams(k=len(points), c=c)
    coords = np.array([(p[0], p[1]) for p in points], dtype=np.float64)
    scores = np.array([p[2] for p in points], dtype=np.float64)
    n = len(points)
    if c**n <= _EXACT_SEARCH_BUDGET:
        return _cluster_exact(coords, scores, c, params.snap_to_member)
    centers, assign, _ = _lloyd(coords, scores, c, params.kmeans_max_iters, seed_on)
    out: list[GridPoint] = []
    for j in range(c):
        members = np.flatnonzero(assign == j)
        if params.snap_to_member:
            d = ((coords[members] - centers[j]) ** 2).sum(axis=1)
            near = members[np.flatnonzero(d == d.min())]
            if len(near) > 1:
                near = near[np.abs(scores[near]) == np.abs(scores[near]).max()]
            pick = _lex_min(near, coords)
            out.append((int(coords[pick, 0]), int(coords[pick, 1]), float(scores[pick])))
        else:
            out.append(
                (float(centers[j, 0]), float(centers[j, 1]), float(scores[members].mean()))
            )
    return out


def grid_to_pixel(
    coords: Sequence[GridPoint], geometry: ImageGeometry, grid_h: int, grid_w: int
) -> list[PromptPoint]:
    """Map grid cells to the pixel at each cell's center; always in-bounds."""
    if grid_h < 1 or grid_w < 1:
        raise ParamError(f"grid dimensions must be >= 1, got {grid_h}x{grid_w}")
    out = []
    for row, col, score in coords:
        if not (0 <= row <= grid_h - 1 and 0 <= col <= grid_w - 1):
            raise ParamError(f"grid coordinate ({row}, {col}) outside {grid_h}x{grid_w}")
        if float(row).is_integer() and float(col).is_integer():
            x = ((2 * int(col) + 1) * geometry.image_width) // (2 * grid_w)
            y = ((2 * int(row) + 1) * geometry.image_height) // (2 * grid_h)
        else:
            x = int(np.floor((col + 0.5) * geometry.image_width / grid_w))
            y = int(np.floor((row + 0.5) * geometry.image_height / grid_h))
        out.append(PromptPoint(int(x), int(y), float(score)))
    return out


def generate_prompts(
    input_fm: FeatureMap, embedding: PromptEmbedding, params: MatchParams = MatchParams()
) -> PointPromptSet:
    """Full interaction: similarity map, TopK both polarities, cluster, to pixels."""
    sim = cosine_similarity_map(embedding, input_fm)
    positives = topk_coords(sim, params.k, "most_similar")
    negatives = topk_coords(sim, params.k, "least_similar")
    pos_centers = cluster_points(positives, params.c, params, seed_on="max_score")
    neg_centers = cluster_points(negatives, params.c, params, seed_on="min_score")
    pos_pixels = grid_to_pixel(pos_centers, input_fm.geometry, sim.height, sim.width)
    neg_pixels = grid_to_pixel(neg_centers, input_fm.geometry, sim.height, sim.width)
    return PointPromptSet(positives=pos_pixels, negatives=neg_pixels, k=params.k, c=params.c)
