"""Self-supervised auxiliary task generators and the task registry.

Five structural tasks (degree, distance, PageRank, clustering,
partition) turn graph statistics into classification labels; meta-path
pair tasks come from the metapath module. Every generator is a pure
function of (graph, seed).
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import TaskConstructionError
from .graph import HeteroGraph

log = logging.getLogger(__name__)

TASK_KINDS = ("primary", "metapath", "degree", "distance", "pagerank", "clustering", "partition")
HEAD_KINDS = ("pair-binary", "node-multiclass", "pair-multiclass")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    name: str
    kind: str
    head_kind: str
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.head_kind!r}")
        if (self.task_id == 0) != (self.kind == "primary"):
            raise ValueError("task id 0 is reserved for (and required by) the primary task")
        if self.head_kind != "pair-binary" and self.num_classes < 2:
            raise ValueError("multiclass heads need num_classes >= 2")


@dataclass
class LabeledSet:
    """Labeled items: node ids (N,) or node pairs (N, 2)."""

    items: np.ndarray
    labels: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.items.shape[0] != self.labels.shape[0]:
            raise ValueError("items and labels must align")

    @property
    def is_pairs(self) -> bool:
        return self.items.ndim == 2

    def __len__(self) -> int:
        return int(self.items.shape[0])


def tail_classes(values: np.ndarray) -> np.ndarray:
    """3-class 20/80 tail labeling: 0 = top, 1 = bottom, 2 = middle.

    Thresholds are the k-th largest/smallest values with k = ceil(0.2 n);
    ties go to the higher-importance class first, so a constant vector
    labels everything as top.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    k = max(1, math.ceil(0.2 * n))
    s = np.sort(v)
    top_thr = s[n - k]
    bot_thr = s[k - 1]
    labels = np.full(n, 2, dtype=np.int64)
    labels[v <= bot_thr] = 1
    labels[v >= top_thr] = 0
    return labels


def _sample_nodes(n: int, frac: float, rng) -> np.ndarray:
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"sample_frac must be in (0, 1], got {frac}")
    count = max(1, int(round(frac * n)))
    return rng.choice(n, size=count, replace=False)


def degree_labels(g: HeteroGraph, sample_frac: float, rng) -> LabeledSet:
    """Degree-tail classes over the union adjacency.

    Thresholds come from the full degree distribution; sample_frac only
    controls how many labeled nodes are kept.
    """
    labels = tail_classes(g.degrees())
    nodes = _sample_nodes(g.num_nodes, sample_frac, rng)
    return LabeledSet(nodes, labels[nodes], info={"task": "degree"})


def bfs_distances(g: HeteroGraph, source: int) -> np.ndarray:
    """Hop distances over the union adjacency; -1 where unreachable."""
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.union_neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(int(v))
    return dist


def distance_labels(g: HeteroGraph, num_pairs: int, rng) -> LabeledSet:
    """Random node pairs labeled by shortest-path bucket {1, 2, 3, >=4}.

    Unreachable pairs are dropped (count kept in info). Raises when no
    sampled pair is connected.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    n = g.num_nodes
    heads = rng.integers(0, n, size=num_pairs)
    tails = rng.integers(0, n, size=num_pairs)
    clash = heads == tails
    while np.any(clash):
        tails[clash] = rng.integers(0, n, size=int(clash.sum()))
        clash = heads == tails

    dist_cache: dict[int, np.ndarray] = {}
    pairs, labels, dropped = [], [], 0
    for h, t in zip(heads.tolist(), tails.tolist()):
        if h not in dist_cache:
            dist_cache[h] = bfs_distances(g, h)
        sp = int(dist_cache[h][t])
        if sp < 0:
            dropped += 1
            continue
        pairs.append((h, t))
        labels.append(min(sp, 4) - 1)
    if not pairs:
        raise TaskConstructionError("distance task: no connected pair among sampled pairs")
    return LabeledSet(
        np.array(pairs, dtype=np.int64),
        np.array(labels, dtype=np.int64),
        info={"task": "distance", "excluded_unreachable": dropped},
    )


def pagerank_scores(g: HeteroGraph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200):
    """Power iteration on the directed forward edges.

    Score mass of dangling nodes is redistributed uniformly, so the
    vector sums to 1 at every iterate. Returns (scores, info).
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must be in (0, 1]")
    n = g.num_nodes
    out_deg = g.out_degrees().astype(np.float64)
    has_out = out_deg > 0
    pr = np.full(n, 1.0 / n)
    sums = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        contrib = np.where(has_out, pr / np.maximum(out_deg, 1.0), 0.0)
        passed = np.bincount(g.edge_dst, weights=contrib[g.edge_src], minlength=n)
        dangling = pr[~has_out].sum()
        nxt = (1.0 - damping) / n + damping * (passed + dangling / n)
        sums.append(float(nxt.sum()))
        delta = float(np.abs(nxt - pr).sum())
        pr = nxt
        if delta < tol:
            converged = True
            break
    if not converged:
        log.warning("pagerank did not converge in %d iterations (damping=%g)", max_iter, damping)
    residual = _pagerank_residual(g, pr, damping)
    return pr, {
        "converged": converged,
        "iterations": iterations,
        "iteration_sums": sums,
        "residual": residual,
    }


def _pagerank_residual(g: HeteroGraph, pr: np.ndarray, damping: float) -> float:
    n = g.num_nodes
    out_deg = g.out_degrees().astype(np.float64)
    has_out = out_deg > 0
    contrib = np.where(has_out, pr / np.maximum(out_deg, 1.0), 0.0)
    passed = np.bincount(g.edge_dst, weights=contrib[g.edge_src], minlength=n)
    fixed = (1.0 - damping) / n + damping * (passed + pr[~has_out].sum() / n)
    return float(np.abs(fixed - pr).sum())


def pagerank_labels(
    g: HeteroGraph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iter: int = 200,
    sample_frac: float = 1.0,
    rng=None,
) -> LabeledSet:
    """PageRank-tail classes, same 20/80 scheme as degree."""
    scores, info = pagerank_scores(g, damping, tol, max_iter)
    labels = tail_classes(scores)
    nodes = _sample_nodes(g.num_nodes, sample_frac, rng)
    info = dict(info, task="pagerank")
    return LabeledSet(nodes, labels[nodes], info=info)


def _adjacency_features(g: HeteroGraph) -> np.ndarray:
    feats = np.zeros((g.num_nodes, g.num_nodes))
    for u in range(g.num_nodes):
        nbrs = g.union_neighbors(u)
        if nbrs.size:
            np.add.at(feats[u], nbrs, 1.0 / nbrs.size)
    return feats


def kmeans(x: np.ndarray, k: int, max_iter: int, rng):
    """Seeded k-means++ plus Lloyd iterations.

    Returns (labels, centers, inertia_history). Empty clusters are
    re-seeded at the point farthest from its assigned center; with
    degenerate duplicate-point inputs some clusters may stay empty, but
    labels remain valid. Inertia history is recorded after each center
    update and is non-increasing for inputs that never trigger a
    re-seed.
    """
    n = x.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    if k == 1:
        center = x.mean(axis=0, keepdims=True)
        inertia = float(((x - center) ** 2).sum())
        return np.zeros(n, dtype=np.int64), center, [inertia]

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(0, n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(0, n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    history = []
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        for j in range(k):
            members = new_labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(dist[np.arange(n), new_labels].argmax())
                centers[j] = x[far]
                new_labels[far] = j
        inertia = float(((x - centers[new_labels]) ** 2).sum())
        history.append(inertia)
        if np.array_equal(new_labels, labels) and len(history) > 1:
            break
        labels = new_labels
    return labels, centers, history


def clustering_labels(g: HeteroGraph, k: int, max_iter: int = 50, rng=None) -> LabeledSet:
    """K-means cluster ids over node features.

    Featureless graphs fall back to row-normalized union adjacency rows.
    """
    x = g.node_features if g.node_features is not None else _adjacency_features(g)
    labels, _, history = kmeans(x, k, max_iter, rng)
    return LabeledSet(
        np.arange(g.num_nodes, dtype=np.int64),
        labels,
        info={"task": "clustering", "inertia_history": history},
    )


def _dense_weights(g: HeteroGraph) -> np.ndarray:
    w = np.zeros((g.num_nodes, g.num_nodes))
    for s, d in zip(g.edge_src, g.edge_dst):
        if s != d:
            w[s, d] += 1.0
            w[d, s] += 1.0
    return w


def edge_cut(g: HeteroGraph, labels: np.ndarray) -> int:
    mask = g.edge_src != g.edge_dst
    return int(np.sum(labels[g.edge_src[mask]] != labels[g.edge_dst[mask]]))


def partition_labels(g: HeteroGraph, k: int, balance_tol: float = 0.0, rng=None) -> LabeledSet:
    """Greedy Kernighan-Lin-style balanced min-cut labels.

    A random balanced partition is refined by best-gain single moves
    (capped part sizes) and pairwise swaps until no strictly positive
    gain remains. The cap is max(ceil(N/k), floor((1+tol) N/k)) so a
    balanced start is always feasible.
    """
    n = g.num_nodes
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} nodes")
    cap = max(math.ceil(n / k), int((1.0 + balance_tol) * n / k + 1e-9))

    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = np.arange(n) % k
    w = _dense_weights(g)
    initial_cut = edge_cut(g, labels)

    idx = np.arange(n)
    while True:
        onehot = np.zeros((n, k))
        onehot[idx, labels] = 1.0
        d = w @ onehot  # d[u, p] = weight from u into part p
        sizes = onehot.sum(axis=0).astype(np.int64)
        move_gain = d - d[idx, labels][:, None]

        masked = move_gain.copy()
        masked[idx, labels] = -np.inf
        masked[:, sizes >= cap] = -np.inf
        mbest = float(masked.max()) if np.isfinite(masked).any() else -np.inf

        # swap_gain[u, v] = gain of exchanging the parts of u and v
        cross = move_gain[:, labels]
        swap = cross + cross.T - 2.0 * w
        swap[labels[:, None] == labels[None, :]] = -np.inf
        swap[np.tril_indices(n)] = -np.inf
        sbest = float(swap.max())

        if max(mbest, sbest) <= 1e-12:
            break
        if mbest >= sbest:
            u, p = np.unravel_index(int(masked.argmax()), masked.shape)
            labels[u] = p
        else:
            u, v = np.unravel_index(int(swap.argmax()), swap.shape)
            labels[u], labels[v] = labels[v], labels[u]

    return LabeledSet(
        np.arange(n, dtype=np.int64),
        labels,
        info={"task": "partition", "edge_cut": edge_cut(g, labels), "initial_cut": initial_cut},
    )


class TaskRegistry:
    """Insertion-ordered task table: id -> (spec, labeled set)."""

    def __init__(self):
        self._entries: dict[int, tuple[TaskSpec, LabeledSet | None]] = {}

    def add(self, spec: TaskSpec, labeled: LabeledSet | None) -> None:
        if spec.task_id in self._entries:
            raise ValueError(f"duplicate task id {spec.task_id}")
        self._entries[spec.task_id] = (spec, labeled)

    def validate(self) -> None:
        if 0 not in self._entries or self._entries[0][0].kind != "primary":
            raise ValueError("registry is missing the primary task (id 0)")

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.items())

    def spec(self, task_id: int) -> TaskSpec:
        return self._entries[task_id][0]

    def labeled(self, task_id: int) -> LabeledSet | None:
        return self._entries[task_id][1]

    @property
    def task_ids(self) -> list[int]:
        return list(self._entries.keys())

    def aux_ids(self) -> list[int]:
        return [tid for tid in self._entries if tid != 0]


def build_task_registry(primary: TaskSpec, aux) -> TaskRegistry:
    """Assemble and validate the registry (primary first, then aux)."""
    reg = TaskRegistry()
    reg.add(primary, None)
    for spec, labeled in aux:
        reg.add(spec, labeled)
    reg.validate()
    return reg
