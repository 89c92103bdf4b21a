"""Meta-path schemas and labeled node-pair example generation.

A schema is a sequence of edge-type ids; an instance is a walk that
follows those types in order. Positive examples come from constrained
random walks, negatives from type-preserving tail corruption with an
instance check. Exhaustive path joins are deliberately avoided; the
tasks only need sampled labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import TaskConstructionError
from .graph import HeteroGraph
from .rng import root_sequence, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaPathSchema:
    name: str
    edge_types: tuple

    def __post_init__(self):
        if len(self.edge_types) < 1:
            raise ValueError("schema needs at least one edge type")

    def __len__(self) -> int:
        return len(self.edge_types)


@dataclass
class PairExample:
    head: int
    tail: int
    label: int
    task: int = -1


def type_signatures(g: HeteroGraph):
    """Observed (src node types, dst node types) per edge type."""
    sigs = []
    for t in range(g.num_edge_types):
        mask = g.edge_type == t
        sigs.append(
            (
                frozenset(np.unique(g.node_type[g.edge_src[mask]]).tolist()),
                frozenset(np.unique(g.node_type[g.edge_dst[mask]]).tolist()),
            )
        )
    return sigs


def schema_from_names(g: HeteroGraph, names: list[str]) -> MetaPathSchema:
    ids = []
    for name in names:
        if name not in g.edge_type_names:
            raise ValueError(f"unknown edge type {name!r} in meta-path {names}")
        ids.append(g.edge_type_names.index(name))
    return MetaPathSchema("-".join(names), tuple(ids))


def _walk_starts(g: HeteroGraph, etype: int) -> np.ndarray:
    """Nodes with at least one outgoing edge of the schema's first type."""
    counts = np.bincount(g.edge_src[g.edge_type == etype], minlength=g.num_nodes)
    return np.nonzero(counts > 0)[0]


def _walk(g: HeteroGraph, schema: MetaPathSchema, starts: np.ndarray, rng: np.random.Generator):
    cur = int(starts[rng.integers(0, starts.size)])
    head = cur
    for t in schema.edge_types:
        nbrs = g.out_neighbors(cur, t)
        if nbrs.size == 0:
            return None
        cur = int(nbrs[rng.integers(0, nbrs.size)])
    return head, cur


def enumerate_schemas(g: HeteroGraph, max_len: int, limit: int, rng=None) -> list[MetaPathSchema]:
    """Endpoint-compatible edge-type chains, ranked by sampled instance counts.

    Chains of length 2..max_len whose consecutive types share at least
    one endpoint node type. The ranking estimate multiplies walk success
    rate by the number of valid walk starts; ties break by (length, name).
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    if rng is None:
        rng = stream(root_sequence(0), "schema-rank")
    sigs = type_signatures(g)
    composable = [t for t in range(g.num_edge_types) if sigs[t][0]]

    chains: list[tuple] = []

    def extend(chain):
        if len(chain) >= 2:
            chains.append(tuple(chain))
        if len(chain) == max_len:
            return
        for t in composable:
            if sigs[chain[-1]][1] & sigs[t][0]:
                extend(chain + [t])

    for t in composable:
        extend([t])

    scored = []
    for chain in chains:
        name = "-".join(g.edge_type_names[t] for t in chain)
        schema = MetaPathSchema(name, chain)
        starts = _walk_starts(g, chain[0])
        hits = 0
        attempts = 100
        for _ in range(attempts):
            if starts.size and _walk(g, schema, starts, rng) is not None:
                hits += 1
        estimate = hits / attempts * starts.size
        scored.append((schema, estimate))
        if len(chain) > 4:
            log.warning("meta-path %s has length %d (> 4)", name, len(chain))

    scored.sort(key=lambda item: (-item[1], len(item[0].edge_types), item[0].name))
    return [s for s, _ in scored[:limit]]


def sample_positive_pairs(g: HeteroGraph, schema: MetaPathSchema, n: int, rng) -> list[PairExample]:
    """n label-1 examples from walks following the schema exactly.

    Raises TaskConstructionError when the schema shows no instances
    within the attempt budget (the caller drops the task).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    starts = _walk_starts(g, schema.edge_types[0])
    out: list[PairExample] = []
    attempts = 0
    zero_budget = max(200, 20 * n)
    total_budget = max(2000, 200 * n)
    while len(out) < n:
        if starts.size == 0 or (attempts >= zero_budget and not out):
            raise TaskConstructionError(f"meta-path {schema.name!r} has no instances")
        if attempts >= total_budget:
            raise TaskConstructionError(
                f"meta-path {schema.name!r} too sparse: {len(out)}/{n} examples after {attempts} walks"
            )
        attempts += 1
        hit = _walk(g, schema, starts, rng)
        if hit is not None:
            out.append(PairExample(head=hit[0], tail=hit[1], label=1))
    return out


def reachable_tails(g: HeteroGraph, schema: MetaPathSchema, head: int) -> set:
    """All nodes reachable from head along the schema's type sequence."""
    frontier = np.array([head], dtype=np.int64)
    for t in schema.edge_types:
        if frontier.size == 0:
            break
        step = [g.out_neighbors(int(u), t) for u in frontier]
        frontier = np.unique(np.concatenate(step)) if step else np.array([], dtype=np.int64)
    return set(frontier.tolist())


def sample_negative_pairs(positives: list[PairExample], g: HeteroGraph, schema: MetaPathSchema, rng):
    """Tail-corrupted label-0 examples, one per positive (minus skips).

    The corrupted tail keeps the original tail's node type and must not
    be reachable via the schema; after 20 rejected draws the positive is
    skipped. Returns (negatives, skip_count).
    """
    if not positives:
        raise ValueError("positives must be nonempty")
    reach_cache: dict[int, set] = {}
    by_type = {t: g.nodes_of_type(t) for t in range(len(g.node_type_names))}
    out: list[PairExample] = []
    skips = 0
    for ex in positives:
        tail_type = int(g.node_type[ex.tail])
        candidates = by_type[tail_type]
        if ex.head not in reach_cache:
            reach_cache[ex.head] = reachable_tails(g, schema, ex.head)
        reachable = reach_cache[ex.head]
        for _ in range(20):
            cand = int(candidates[rng.integers(0, candidates.size)])
            if cand not in reachable:
                out.append(PairExample(head=ex.head, tail=cand, label=0, task=ex.task))
                break
        else:
            skips += 1
    return out, skips


def dump_pairs_tsv(path: str, examples: list[PairExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("head\ttail\tlabel\ttask\n")
        for ex in examples:
            fh.write(f"{ex.head}\t{ex.tail}\t{ex.label}\t{ex.task}\n")
