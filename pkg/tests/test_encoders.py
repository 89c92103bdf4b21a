import numpy as np
import pytest

import selar.autodiff as ad
from oracles import directional_param_check
from selar.autodiff import Tensor
from selar.encoders import EncoderConfig, encode, init_encoder_params
from selar.graph import HeteroGraph


def random_graph(seed, n=20, m=60, ntypes=2, etypes=2, feat_dim=None):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, feat_dim)) if feat_dim else None
    return HeteroGraph(
        n,
        rng.integers(0, ntypes, n),
        rng.integers(0, n, m),
        rng.integers(0, etypes, m),
        rng.integers(0, n, m),
        [f"e{i}" for i in range(etypes)],
        [f"t{i}" for i in range(ntypes)],
        node_features=feats,
    )


@pytest.mark.parametrize("kind", ["gcn", "sgc", "gin", "gat"])
@pytest.mark.parametrize("feat_dim", [None, 5])
def test_output_shape_and_determinism(kind, feat_dim):
    g = random_graph(0, feat_dim=feat_dim)
    cfg = EncoderConfig(kind, layers=2, hidden_dim=6, out_dim=4, sgc_hops=2, fanout=3)
    params = init_encoder_params(cfg, g, np.random.default_rng(1))
    batch = np.array([0, 3, 3, 7])
    z1 = encode(g, cfg, params, batch, np.random.default_rng(2))
    z2 = encode(g, cfg, params, batch, np.random.default_rng(2))
    z3 = encode(g, cfg, params, batch, np.random.default_rng(3))
    assert z1.shape == (4, 4)
    assert np.array_equal(z1.data, z2.data)
    assert not np.array_equal(z1.data, z3.data)


def test_sgc_zero_hops_is_plain_linear_map():
    g = random_graph(1, feat_dim=5)
    cfg = EncoderConfig("sgc", sgc_hops=0, hidden_dim=6, out_dim=3)
    params = init_encoder_params(cfg, g, np.random.default_rng(0))
    batch = np.array([2, 9, 11])
    z = encode(g, cfg, params, batch, np.random.default_rng(0))
    direct = g.node_features[batch] @ params["enc/W"].data + params["enc/b"].data
    assert np.allclose(z.data, direct, atol=0)


def test_gin_isolated_node_is_pure_mlp():
    # Node 3 is isolated; with eps=0 the neighbor term must vanish.
    g = HeteroGraph(
        4,
        np.zeros(4),
        np.array([0, 1]),
        np.array([0, 0]),
        np.array([1, 2]),
        ["e"],
        ["t"],
        node_features=np.random.default_rng(0).normal(size=(4, 3)),
    )
    cfg = EncoderConfig("gin", layers=1, hidden_dim=5, out_dim=5, fanout=4, gin_eps=0.0)
    params = init_encoder_params(cfg, g, np.random.default_rng(1))
    z = encode(g, cfg, params, np.array([3]), np.random.default_rng(2))
    x = g.node_features[3]
    hid = np.maximum(x @ params["enc/L0/W1"].data + params["enc/L0/b1"].data, 0.0)
    direct = hid @ params["enc/L0/W2"].data + params["enc/L0/b2"].data
    assert np.allclose(z.data[0], direct, atol=1e-14)


def test_gin_degree_one_neighbor_sum_is_exact():
    # Two nodes, one edge: the degree-scaled sampled sum equals the true sum.
    g = HeteroGraph(
        2,
        np.zeros(2),
        np.array([0]),
        np.array([0]),
        np.array([1]),
        ["e"],
        ["t"],
        node_features=np.array([[1.0, 2.0], [3.0, -1.0]]),
    )
    cfg = EncoderConfig("gin", layers=1, hidden_dim=4, out_dim=4, fanout=7, gin_eps=0.5)
    params = init_encoder_params(cfg, g, np.random.default_rng(4))
    z = encode(g, cfg, params, np.array([0]), np.random.default_rng(5))
    pre = 1.5 * g.node_features[0] + g.node_features[1]
    hid = np.maximum(pre @ params["enc/L0/W1"].data + params["enc/L0/b1"].data, 0.0)
    direct = hid @ params["enc/L0/W2"].data + params["enc/L0/b2"].data
    assert np.allclose(z.data[0], direct, atol=1e-14)


def test_gat_attention_rows_sum_to_one():
    g = random_graph(2, feat_dim=4)
    cfg = EncoderConfig("gat", layers=2, hidden_dim=5, out_dim=3, fanout=4)
    params = init_encoder_params(cfg, g, np.random.default_rng(0))
    collect = {}
    encode(g, cfg, params, np.arange(6), np.random.default_rng(1), collect=collect)
    assert collect["gat_alpha"]
    for alpha in collect["gat_alpha"].values():
        assert np.all(np.abs(alpha.sum(axis=-1) - 1.0) < 1e-9)


@pytest.mark.parametrize("kind", ["gcn", "sgc", "gin", "gat"])
def test_permutation_equivariance_exact(kind):
    rng = np.random.default_rng(3)
    n, m = 15, 50
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    et = rng.integers(0, 2, m)
    ntype = rng.integers(0, 2, n)
    feats = rng.normal(size=(n, 4))
    g1 = HeteroGraph(n, ntype, src, et, dst, ["a", "b"], ["t0", "t1"], node_features=feats)
    perm = rng.permutation(n)
    feats2 = np.empty_like(feats)
    feats2[perm] = feats
    ntype2 = np.empty_like(ntype)
    ntype2[perm] = ntype
    g2 = HeteroGraph(n, ntype2, perm[src], et, perm[dst], ["a", "b"], ["t0", "t1"], node_features=feats2)

    cfg = EncoderConfig(kind, layers=2, hidden_dim=6, out_dim=4, sgc_hops=2, fanout=3)
    params = init_encoder_params(cfg, g1, np.random.default_rng(7))
    batch = np.array([4, 0, 9, 9, 13])
    z1 = encode(g1, cfg, params, batch, np.random.default_rng(11))
    z2 = encode(g2, cfg, params, perm[batch], np.random.default_rng(11))
    assert np.array_equal(z1.data, z2.data)


@pytest.mark.parametrize("kind", ["gcn", "sgc", "gin", "gat"])
@pytest.mark.parametrize("feat_dim", [None, 4])
def test_encoder_gradcheck_directional(kind, feat_dim):
    g = random_graph(5, n=16, m=40, feat_dim=feat_dim)
    cfg = EncoderConfig(kind, layers=2, hidden_dim=5, out_dim=3, sgc_hops=2, fanout=3)
    params = init_encoder_params(cfg, g, np.random.default_rng(6))
    # Zero-init biases can park a relu input exactly at its kink (a fully
    # saturated row feeds out = b = 0), where FD and subgradient differ.
    nudge = np.random.default_rng(10)
    for p in params.values():
        p.data += 0.01 * nudge.normal(size=p.shape)
    batch = np.array([1, 5, 8, 12])
    w = np.random.default_rng(8).normal(size=(4, 3))

    def build_loss():
        z = encode(g, cfg, params, batch, np.random.default_rng(9))
        return ad.tensor_sum(ad.mul(z, Tensor(w)))

    assert directional_param_check(build_loss, params, ndirs=3, h=1e-6) < 1e-5


def test_config_validation():
    with pytest.raises(ValueError, match="kind"):
        EncoderConfig("mlp")
    with pytest.raises(ValueError, match="layers"):
        EncoderConfig("gcn", layers=0)
    with pytest.raises(ValueError, match="dims"):
        EncoderConfig("gcn", hidden_dim=0)
