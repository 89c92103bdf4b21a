"""GNN encoders over fixed-fanout sampled neighborhoods.

All four encoders share the same skeleton: expand the batch into L
levels of with-replacement neighbor samples (one positional rng block
per level, so node relabeling plus batch permutation permutes the
output exactly), then aggregate bottom-up. Graphs without features use
a learned per-node-type embedding table as layer-0 input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import HeteroGraph, sample_neighbor_block

ENCODER_KINDS = ("gcn", "sgc", "gin", "gat")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    layers: int = 2
    hidden_dim: int = 16
    out_dim: int = 16
    sgc_hops: int = 2
    fanout: int = 8
    gin_eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if min(self.hidden_dim, self.out_dim) < 1:
            raise ValueError("dims must be >= 1")
        if self.sgc_hops < 0:
            raise ValueError("sgc_hops must be >= 0")
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")

    @property
    def depth(self) -> int:
        """Sampling depth: message-passing layers (or hops for SGC)."""
        return self.sgc_hops if self.kind == "sgc" else self.layers


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=(fan_in, fan_out))


def input_dim(cfg: EncoderConfig, g: HeteroGraph) -> int:
    return g.node_features.shape[1] if g.node_features is not None else cfg.hidden_dim


def _layer_dims(cfg: EncoderConfig, g: HeteroGraph) -> list[tuple[int, int]]:
    dims = []
    d = input_dim(cfg, g)
    for layer in range(cfg.layers):
        out = cfg.out_dim if layer == cfg.layers - 1 else cfg.hidden_dim
        dims.append((d, out))
        d = out
    return dims


def init_encoder_params(cfg: EncoderConfig, g: HeteroGraph, rng, prefix: str = "enc") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    if g.node_features is None:
        params[f"{prefix}/type_embed"] = Tensor(
            rng.normal(0.0, 1.0, size=(len(g.node_type_names), cfg.hidden_dim))
        )
    if cfg.kind == "sgc":
        d_in = input_dim(cfg, g)
        params[f"{prefix}/W"] = Tensor(_glorot(rng, d_in, cfg.out_dim))
        params[f"{prefix}/b"] = Tensor(np.zeros(cfg.out_dim))
        return params
    for layer, (d_in, d_out) in enumerate(_layer_dims(cfg, g)):
        if cfg.kind == "gin":
            params[f"{prefix}/L{layer}/W1"] = Tensor(_glorot(rng, d_in, d_out))
            params[f"{prefix}/L{layer}/b1"] = Tensor(np.zeros(d_out))
            params[f"{prefix}/L{layer}/W2"] = Tensor(_glorot(rng, d_out, d_out))
            params[f"{prefix}/L{layer}/b2"] = Tensor(np.zeros(d_out))
        else:
            params[f"{prefix}/L{layer}/W"] = Tensor(_glorot(rng, d_in, d_out))
            params[f"{prefix}/L{layer}/b"] = Tensor(np.zeros(d_out))
            if cfg.kind == "gat":
                params[f"{prefix}/L{layer}/a_self"] = Tensor(rng.normal(0.0, 0.1, size=(d_out, 1)))
                params[f"{prefix}/L{layer}/a_nbr"] = Tensor(rng.normal(0.0, 0.1, size=(d_out, 1)))
    return params


def _input_features(g: HeteroGraph, nodes: np.ndarray, params: dict, prefix: str) -> Tensor:
    if g.node_features is not None:
        return Tensor(g.node_features[nodes])
    return ad.gather_rows(params[f"{prefix}/type_embed"], g.node_type[nodes])


def _mean_with_self(self_mat: Tensor, nbr_mat: Tensor, fanout: int) -> Tensor:
    b, d = self_mat.shape
    stacked = ad.concat([ad.reshape(self_mat, (b, 1, d)), nbr_mat], axis=1)
    return ad.mean(stacked, axis=1)


def encode(
    g: HeteroGraph,
    cfg: EncoderConfig,
    params: dict,
    batch,
    rng,
    prefix: str = "enc",
    collect: dict | None = None,
) -> Tensor:
    """Embeddings (len(batch), out_dim) over freshly sampled neighborhoods.

    ``collect``, when given, receives debug internals (GAT attention
    weights per layer as plain arrays).
    """
    batch = np.asarray(batch, dtype=np.int64)
    depth = cfg.depth
    levels = [batch]
    for _ in range(depth):
        levels.append(sample_neighbor_block(g, levels[-1], cfg.fanout, rng).reshape(-1))

    h = [_input_features(g, lv, params, prefix) for lv in levels]

    if cfg.kind == "sgc":
        for step in range(depth):
            nxt = []
            for d in range(len(h) - 1):
                b = h[d].shape[0]
                dim = h[d].shape[1]
                nbr = ad.reshape(h[d + 1], (b, cfg.fanout, dim))
                nxt.append(_mean_with_self(h[d], nbr, cfg.fanout))
            h = nxt
        return ad.add(ad.matmul(h[0], params[f"{prefix}/W"]), params[f"{prefix}/b"])

    for layer in range(cfg.layers):
        last = layer == cfg.layers - 1
        nxt = []
        for d in range(len(h) - 1):
            b = h[d].shape[0]
            dim = h[d].shape[1]
            nbr = ad.reshape(h[d + 1], (b, cfg.fanout, dim))
            if cfg.kind == "gcn":
                agg = _mean_with_self(h[d], nbr, cfg.fanout)
                out = ad.add(ad.matmul(agg, params[f"{prefix}/L{layer}/W"]), params[f"{prefix}/L{layer}/b"])
            elif cfg.kind == "gin":
                deg = g.degrees()[levels[d]].astype(np.float64)
                scaled_sum = ad.mul(ad.tensor_sum(nbr, axis=1), Tensor((deg / cfg.fanout)[:, None]))
                pre = ad.add(ad.mul(h[d], 1.0 + cfg.gin_eps), scaled_sum)
                hid = ad.relu(
                    ad.add(ad.matmul(pre, params[f"{prefix}/L{layer}/W1"]), params[f"{prefix}/L{layer}/b1"])
                )
                out = ad.add(ad.matmul(hid, params[f"{prefix}/L{layer}/W2"]), params[f"{prefix}/L{layer}/b2"])
            else:  # gat
                w = params[f"{prefix}/L{layer}/W"]
                d_out = w.shape[1]
                z_self = ad.matmul(h[d], w)
                z_nbr = ad.matmul(ad.reshape(nbr, (b * cfg.fanout, dim)), w)
                cand = ad.concat([ad.reshape(z_self, (b, 1, d_out)), ad.reshape(z_nbr, (b, cfg.fanout, d_out))], axis=1)
                s_self = ad.matmul(z_self, params[f"{prefix}/L{layer}/a_self"])  # (b, 1)
                s_cand = ad.reshape(
                    ad.matmul(ad.reshape(cand, (b * (cfg.fanout + 1), d_out)), params[f"{prefix}/L{layer}/a_nbr"]),
                    (b, cfg.fanout + 1),
                )
                logits = ad.leaky_relu(ad.add(s_self, s_cand), alpha=0.2)
                alpha = ad.softmax(logits, axis=-1)
                if collect is not None:
                    collect.setdefault("gat_alpha", {})[(layer, d)] = alpha.data.copy()
                weighted = ad.mul(ad.reshape(alpha, (b, cfg.fanout + 1, 1)), cand)
                out = ad.add(ad.tensor_sum(weighted, axis=1), params[f"{prefix}/L{layer}/b"])
            if not last:
                out = ad.relu(out)
            nxt.append(out)
        h = nxt
    return h[0]
