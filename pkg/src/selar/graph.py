"""Heterogeneous graph container, TSV ingestion, sampling, and splits.

A graph is immutable once built: per-edge-type adjacency is stored as
CSR in both directions, plus a union adjacency that concatenates, for
each node, its forward neighbor lists (in edge-type declaration order)
followed by its reverse lists. Neighbor lists preserve file insertion
order, which is what makes sampling bit-reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, GraphFormatError
from .rng import root_sequence, stream


def _csr(n: int, owners: np.ndarray, values: np.ndarray, order_keys=None):
    """Build (indptr, indices) grouping values by owner, stable in file order."""
    if order_keys is None:
        order = np.argsort(owners, kind="stable")
    else:
        order = np.lexsort(order_keys + (owners,))
    counts = np.bincount(owners, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, values[order].astype(np.int64)


class HeteroGraph:
    def __init__(
        self,
        num_nodes: int,
        node_type: np.ndarray,
        edge_src: np.ndarray,
        edge_type: np.ndarray,
        edge_dst: np.ndarray,
        edge_type_names: list[str],
        node_type_names: list[str],
        node_features: np.ndarray | None = None,
        node_labels: np.ndarray | None = None,
    ):
        self.num_nodes = int(num_nodes)
        self.node_type = np.asarray(node_type, dtype=np.int64)
        self.edge_src = np.asarray(edge_src, dtype=np.int64)
        self.edge_type = np.asarray(edge_type, dtype=np.int64)
        self.edge_dst = np.asarray(edge_dst, dtype=np.int64)
        self.edge_type_names = list(edge_type_names)
        self.node_type_names = list(node_type_names)
        self.node_features = None if node_features is None else np.asarray(node_features, dtype=np.float64)
        self.node_labels = None if node_labels is None else np.asarray(node_labels, dtype=np.int64)

        if self.node_type.shape != (self.num_nodes,):
            raise DataError(f"node_type has shape {self.node_type.shape}, expected ({self.num_nodes},)")
        for arr, what in ((self.edge_src, "src"), (self.edge_dst, "dst")):
            bad = np.nonzero((arr < 0) | (arr >= self.num_nodes))[0]
            if bad.size:
                raise DataError(f"edge {what} id {arr[bad[0]]} out of range (graph has {self.num_nodes} nodes)")
        if self.edge_type.size and (self.edge_type.min() < 0 or self.edge_type.max() >= len(self.edge_type_names)):
            raise DataError("edge carries an invalid edge-type id")
        if self.node_features is not None and self.node_features.shape[0] != self.num_nodes:
            raise DataError("node_features row count does not match num_nodes")

        t = len(self.edge_type_names)
        self._fwd = []
        self._rev = []
        for ti in range(t):
            m = self.edge_type == ti
            self._fwd.append(_csr(self.num_nodes, self.edge_src[m], self.edge_dst[m]))
            self._rev.append(_csr(self.num_nodes, self.edge_dst[m], self.edge_src[m]))

        # Union adjacency: forward lists by edge type, then reverse lists.
        pos = np.arange(self.edge_src.size, dtype=np.int64)
        owners = np.concatenate([self.edge_src, self.edge_dst])
        values = np.concatenate([self.edge_dst, self.edge_src])
        segment = np.concatenate([self.edge_type, self.edge_type + t])
        self._union = _csr(self.num_nodes, owners, values, order_keys=(np.concatenate([pos, pos]), segment))

    @property
    def num_edges(self) -> int:
        return int(self.edge_src.size)

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    def out_neighbors(self, node: int, etype: int) -> np.ndarray:
        indptr, indices = self._fwd[etype]
        return indices[indptr[node] : indptr[node + 1]]

    def in_neighbors(self, node: int, etype: int) -> np.ndarray:
        indptr, indices = self._rev[etype]
        return indices[indptr[node] : indptr[node + 1]]

    def union_neighbors(self, node: int) -> np.ndarray:
        indptr, indices = self._union
        return indices[indptr[node] : indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        """Union degree: forward plus reverse incidences per node."""
        indptr, _ = self._union
        return np.diff(indptr)

    def out_degrees(self) -> np.ndarray:
        """Forward out-degree summed over edge types."""
        return np.bincount(self.edge_src, minlength=self.num_nodes).astype(np.int64)

    def nodes_of_type(self, type_id: int) -> np.ndarray:
        return np.nonzero(self.node_type == type_id)[0]

    def edge_ids_of_type(self, type_id: int) -> np.ndarray:
        return np.nonzero(self.edge_type == type_id)[0]

    def has_edge(self, src: int, etype: int, dst: int) -> bool:
        return dst in self.out_neighbors(src, etype)

    def without_edges(self, edge_ids: np.ndarray) -> "HeteroGraph":
        """A copy with the given edge ids removed (message passing on the
        train graph must not see held-out edges)."""
        keep = np.ones(self.num_edges, dtype=bool)
        keep[np.asarray(edge_ids, dtype=np.int64)] = False
        return HeteroGraph(
            self.num_nodes,
            self.node_type,
            self.edge_src[keep],
            self.edge_type[keep],
            self.edge_dst[keep],
            self.edge_type_names,
            self.node_type_names,
            self.node_features,
            self.node_labels,
        )


def sample_neighbors(g: HeteroGraph, node: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform with-replacement sample from the union neighborhood.

    Isolated nodes fall back to sampling themselves.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    nbrs = g.union_neighbors(node)
    if nbrs.size == 0:
        return np.full(size, node, dtype=np.int64)
    return nbrs[rng.integers(0, nbrs.size, size=size)]


def sample_neighbor_block(g: HeteroGraph, nodes: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """(len(nodes), size) neighbor sample using one positional rng draw.

    Randomness is consumed as a single (B, size) block in batch order, so
    relabeling nodes and permuting the batch permutes the output exactly.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    indptr, indices = g._union
    deg = (indptr[nodes + 1] - indptr[nodes]).astype(np.int64)
    draws = rng.random((nodes.size, size))
    if indices.size == 0:
        return np.tile(nodes[:, None], (1, size))
    offset = np.minimum((draws * deg[:, None]).astype(np.int64), np.maximum(deg - 1, 0)[:, None])
    addr = np.minimum(indptr[nodes][:, None] + offset, indices.size - 1)
    return np.where(deg[:, None] > 0, indices[addr], nodes[:, None])


@dataclass
class SplitAssignment:
    """Ids split into train/valid/test, with train cut into meta folds."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    folds: list = field(default_factory=list)

    def check(self) -> None:
        pools = np.concatenate([self.train, self.valid, self.test])
        assert len(np.unique(pools)) == pools.size, "splits overlap"
        if self.folds:
            joined = np.concatenate(self.folds)
            assert sorted(joined.tolist()) == sorted(self.train.tolist()), "folds must partition train"


def make_splits(ids, ratios, meta_folds: int, seed: int) -> SplitAssignment:
    """Shuffle ids and slice into train/valid/test plus K meta folds.

    ids may be an integer count (meaning arange) or an id array. Fold
    sizes differ by at most one.
    """
    if isinstance(ids, (int, np.integer)):
        ids = np.arange(int(ids), dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
    r = [float(x) for x in ratios]
    if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    if meta_folds < 1:
        raise ValueError("meta_folds must be >= 1")

    rng = stream(root_sequence(seed), "splits")
    order = ids[rng.permutation(ids.size)]
    n_train = int(r[0] * ids.size)
    n_valid = int(r[1] * ids.size)
    train, valid, test = order[:n_train], order[n_train : n_train + n_valid], order[n_train + n_valid :]
    if n_train < meta_folds:
        raise DataError(f"cannot cut {n_train} train items into {meta_folds} meta folds")

    base, extra = divmod(n_train, meta_folds)
    folds, at = [], 0
    for k in range(meta_folds):
        step = base + (1 if k < extra else 0)
        folds.append(train[at : at + step])
        at += step
    return SplitAssignment(train=train, valid=valid, test=test, folds=folds)


def _split_row(line: str) -> list[str]:
    return line.rstrip("\n").rstrip("\r").split("\t")


def load_graph(nodes_path: str, edges_path: str, labels_path: str | None = None) -> HeteroGraph:
    """Read the TSV pair (plus optional labels file) into a HeteroGraph.

    nodes.tsv: node_id<TAB>node_type[<TAB>f0<TAB>f1...], ids 0..N-1.
    edges.tsv: src<TAB>edge_type<TAB>dst.
    Vocabularies (node types, edge types) are assigned ids in first-
    appearance order.
    """
    node_type_names: list[str] = []
    type_index: dict[str, int] = {}
    rows: dict[int, tuple[int, list[float] | None]] = {}
    feat_dim = None

    for path in (nodes_path, edges_path) + ((labels_path,) if labels_path else ()):
        if not os.path.isfile(path):
            raise GraphFormatError("graph file not found", path=path)

    with open(nodes_path, encoding="utf-8") as fh:
        header = _split_row(fh.readline())
        if header[:2] != ["node_id", "node_type"]:
            raise GraphFormatError(f"{nodes_path} line 1: header must start with node_id<TAB>node_type")
        declared_feats = len(header) - 2
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = _split_row(line)
            if len(cols) != len(header):
                raise GraphFormatError(
                    f"{nodes_path} line {lineno}: expected {len(header)} columns, got {len(cols)}"
                )
            try:
                nid = int(cols[0])
            except ValueError:
                raise GraphFormatError(f"{nodes_path} line {lineno}: node_id {cols[0]!r} is not an integer") from None
            if nid in rows:
                raise GraphFormatError(f"{nodes_path} line {lineno}: duplicate node id {nid}")
            tname = cols[1]
            if tname not in type_index:
                type_index[tname] = len(node_type_names)
                node_type_names.append(tname)
            feats = None
            if declared_feats:
                try:
                    feats = [float(x) for x in cols[2:]]
                except ValueError:
                    raise GraphFormatError(f"{nodes_path} line {lineno}: non-numeric feature value") from None
                if feat_dim is None:
                    feat_dim = len(feats)
                elif len(feats) != feat_dim:
                    raise GraphFormatError(f"{nodes_path} line {lineno}: inconsistent feature dimension")
            rows[nid] = (type_index[tname], feats)

    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise GraphFormatError(f"{nodes_path}: node ids must be contiguous 0..{n - 1}")
    node_type = np.array([rows[i][0] for i in range(n)], dtype=np.int64)
    features = None
    if feat_dim:
        features = np.array([rows[i][1] for i in range(n)], dtype=np.float64)

    edge_type_names: list[str] = []
    etype_index: dict[str, int] = {}
    src, etype, dst = [], [], []
    with open(edges_path, encoding="utf-8") as fh:
        header = _split_row(fh.readline())
        if header != ["src", "edge_type", "dst"]:
            raise GraphFormatError(f"{edges_path} line 1: header must be src<TAB>edge_type<TAB>dst")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = _split_row(line)
            if len(cols) != 3:
                raise GraphFormatError(f"{edges_path} line {lineno}: expected 3 columns, got {len(cols)}")
            try:
                s, d = int(cols[0]), int(cols[2])
            except ValueError:
                raise GraphFormatError(f"{edges_path} line {lineno}: endpoints must be integers") from None
            for endpoint in (s, d):
                if not 0 <= endpoint < n:
                    raise GraphFormatError(
                        f"{edges_path} line {lineno}: node id {endpoint} out of range ({n} nodes)"
                    )
            name = cols[1]
            if name not in etype_index:
                etype_index[name] = len(edge_type_names)
                edge_type_names.append(name)
            src.append(s)
            etype.append(etype_index[name])
            dst.append(d)

    labels = None
    if labels_path is not None:
        labels = np.full(n, -1, dtype=np.int64)
        with open(labels_path, encoding="utf-8") as fh:
            header = _split_row(fh.readline())
            if header != ["node_id", "label"]:
                raise GraphFormatError(f"{labels_path} line 1: header must be node_id<TAB>label")
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                cols = _split_row(line)
                try:
                    labels[int(cols[0])] = int(cols[1])
                except (ValueError, IndexError):
                    raise GraphFormatError(f"{labels_path} line {lineno}: malformed row") from None

    return HeteroGraph(
        n,
        node_type,
        np.array(src, dtype=np.int64),
        np.array(etype, dtype=np.int64),
        np.array(dst, dtype=np.int64),
        edge_type_names,
        node_type_names,
        features,
        labels,
    )


def save_graph(g: HeteroGraph, nodes_path: str, edges_path: str, labels_path: str | None = None) -> None:
    """Write a graph back out in the load_graph formats."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        feat_dim = 0 if g.node_features is None else g.node_features.shape[1]
        cols = ["node_id", "node_type"] + [f"f{i}" for i in range(feat_dim)]
        fh.write("\t".join(cols) + "\n")
        for i in range(g.num_nodes):
            row = [str(i), g.node_type_names[g.node_type[i]]]
            if feat_dim:
                row += [repr(float(x)) for x in g.node_features[i]]
            fh.write("\t".join(row) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("src\tedge_type\tdst\n")
        for s, t, d in zip(g.edge_src, g.edge_type, g.edge_dst):
            fh.write(f"{s}\t{g.edge_type_names[t]}\t{d}\n")
    if labels_path is not None and g.node_labels is not None:
        with open(labels_path, "w", encoding="utf-8") as fh:
            fh.write("node_id\tlabel\n")
            for i, lab in enumerate(g.node_labels):
                fh.write(f"{i}\t{lab}\n")
