"""Synthetic heterogeneous graph generator.

The generator spec is a plain dict (JSON-friendly):

    {
      "node_types": {"user": 100, "item": 150, "actor": 50},
      "edge_types": [
        {"name": "ui", "src": "user", "dst": "item", "density": 0.05},
        {"name": "uu", "src": "user", "dst": "user",
         "within_density": 0.3, "across_density": 0.02}
      ],
      "communities": 2,
      "features": {"dim": 8, "separation": 3.0}
    }

Every edge type samples each ordered (src, dst) pair as an independent
Bernoulli draw; same-type pairs exclude self loops. Edge types with
within/across densities require planted communities, which also become
ground-truth node labels. Everything is deterministic per (spec, seed).
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .graph import HeteroGraph
from .rng import root_sequence, stream


def _check_density(value, name: str) -> float:
    p = float(value)
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge type {name!r}: density {p} outside [0, 1]")
    return p


def generate_synthetic(spec: dict, seed: int) -> HeteroGraph:
    node_types = spec.get("node_types")
    if not node_types:
        raise ConfigError("generator spec needs non-empty 'node_types'")
    type_names = list(node_types.keys())
    sizes = [int(node_types[t]) for t in type_names]
    if any(s <= 0 for s in sizes):
        raise ConfigError("node type sizes must be positive")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    node_type = np.repeat(np.arange(len(sizes)), sizes)

    base = root_sequence(seed)
    num_comm = int(spec.get("communities", 0) or 0)
    labels = None
    if num_comm:
        if num_comm < 2:
            raise ConfigError("communities must be >= 2 when present")
        perm = stream(base, "communities").permutation(n)
        labels = np.empty(n, dtype=np.int64)
        labels[perm] = np.arange(n) % num_comm

    features = None
    feat_spec = spec.get("features")
    if feat_spec:
        dim = int(feat_spec["dim"])
        sep = float(feat_spec.get("separation", 3.0))
        frng = stream(base, "features")
        group = labels if labels is not None else node_type
        centers = frng.normal(0.0, sep, size=(int(group.max()) + 1, dim))
        features = centers[group] + frng.normal(0.0, 1.0, size=(n, dim))

    edge_specs = spec.get("edge_types")
    if not edge_specs:
        raise ConfigError("generator spec needs non-empty 'edge_types'")
    src_all, etype_all, dst_all = [], [], []
    edge_names = []
    for i, es in enumerate(edge_specs):
        name = es.get("name", f"e{i}")
        if name in edge_names:
            raise ConfigError(f"duplicate edge type name {name!r}")
        edge_names.append(name)
        for endpoint in ("src", "dst"):
            if es.get(endpoint) not in node_types:
                raise ConfigError(f"edge type {name!r}: unknown {endpoint} node type {es.get(endpoint)!r}")
        s_id = type_names.index(es["src"])
        d_id = type_names.index(es["dst"])
        s_nodes = np.arange(offsets[s_id], offsets[s_id + 1])
        d_nodes = np.arange(offsets[d_id], offsets[d_id + 1])

        if "within_density" in es or "across_density" in es:
            if labels is None:
                raise ConfigError(f"edge type {name!r} uses community densities but no 'communities' declared")
            within = _check_density(es.get("within_density", 0.0), name)
            across = _check_density(es.get("across_density", 0.0), name)
            prob = np.where(labels[s_nodes][:, None] == labels[d_nodes][None, :], within, across)
        else:
            prob = np.full((s_nodes.size, d_nodes.size), _check_density(es.get("density", 0.0), name))

        draws = stream(base, "edges", i).random((s_nodes.size, d_nodes.size))
        hit = draws < prob
        if s_id == d_id:
            np.fill_diagonal(hit, False)
        si, di = np.nonzero(hit)
        src_all.append(s_nodes[si])
        dst_all.append(d_nodes[di])
        etype_all.append(np.full(si.size, i, dtype=np.int64))

    return HeteroGraph(
        n,
        node_type,
        np.concatenate(src_all) if src_all else np.array([], dtype=np.int64),
        np.concatenate(etype_all) if etype_all else np.array([], dtype=np.int64),
        np.concatenate(dst_all) if dst_all else np.array([], dtype=np.int64),
        edge_names,
        type_names,
        features,
        labels,
    )
