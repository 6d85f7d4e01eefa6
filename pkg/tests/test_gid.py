import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ginctr import autodiff as ad
from ginctr.cograph import build_graph, topn_selector
from ginctr.gid import (
    GidParams,
    HopParams,
    NeighborIndex,
    aggregate,
    gid_forward,
    hop_shapes,
    intention_batch,
    neighbor_attention,
    plan_batch,
    score,
    sumpool_batch,
)

from oracles import aggregate_node, gid_reference, softmax, topn


def random_hops(rng, d, K, scale=0.5):
    return [{f: rng.normal(scale=scale, size=s) for f, s in hop_shapes(d).items()} for _ in range(K)]


def as_params(hops):
    return GidParams([HopParams.from_mapping(h) for h in hops])


def random_instance(seed, n_items=10, d=4, K=2):
    rng = np.random.default_rng(seed)
    items = [f"i{k}" for k in range(n_items)]
    sessions = [[items[j] for j in rng.integers(0, n_items, size=5)] for _ in range(8)]
    g = build_graph(sessions, 1)
    rows = {it: k + 1 for k, it in enumerate(items)}
    table = rng.normal(size=(n_items + 1, d))
    clicks = [items[j] for j in rng.integers(0, n_items, size=int(rng.integers(1, 6)))]
    ad_item = items[int(rng.integers(n_items))]
    return g, rows, table, random_hops(rng, d, K), clicks, ad_item


def adj_of(g):
    return {u: dict(nb) for u, nb in g.adjacency.items()}


# ----------------------------------------------------------- per-node ops


def test_attention_single_and_identical_neighbors():
    r = np.random.default_rng(0)
    W, z, h = r.normal(size=(3, 3)), r.normal(size=6), r.normal(size=3)
    assert np.array_equal(neighbor_attention(h, [r.normal(size=3)], W, z).value, [1.0])
    v = r.normal(size=3)
    assert np.allclose(neighbor_attention(h, [v, v, v], W, z).value, 1 / 3, rtol=0, atol=1e-15)


@given(st.integers(0, 10_000))
def test_attention_random_sums_to_one(seed):
    r = np.random.default_rng(seed)
    a = neighbor_attention(r.normal(size=4), [r.normal(size=4) for _ in range(3)], r.normal(size=(4, 4)), r.normal(size=8)).value
    assert np.all(a >= 0) and abs(a.sum() - 1) <= 1e-12


def test_attention_needs_neighbors():
    with pytest.raises(ValueError):
        neighbor_attention(np.ones(2), [], np.eye(2), np.ones(4))


def test_aggregate_empty_neighbors_zero_params():
    zero = HopParams.from_mapping({f: np.zeros(s) for f, s in hop_shapes(3).items()})
    assert np.array_equal(aggregate(np.array([1.0, -2.0, 3.0]), [], zero).value, np.zeros(3))


def test_aggregate_hand_example():
    I = np.eye(2)
    hop = HopParams.from_mapping({"W": I, "z": np.ones(4), "M": I, "m": np.zeros(2), "B": np.hstack([I, I]), "b": np.zeros(2)})
    out = aggregate(np.array([1.0, 0.0]), [np.array([0.0, 1.0])], hop)
    assert np.array_equal(out.value, [1.0, 1.0])


def test_aggregate_shape_check():
    hop = HopParams.from_mapping({f: np.zeros(s) for f, s in hop_shapes(3).items()})
    with pytest.raises(ad.ShapeError):
        aggregate(np.ones(2), [], hop)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_aggregate_matches_formula_and_is_symmetric(seed, n):
    r = np.random.default_rng(seed)
    d = 3
    hp = random_hops(r, d, 1)[0]
    h_u = r.normal(size=d)
    H = [r.normal(size=d) for _ in range(n)]
    out = aggregate(h_u, H, HopParams.from_mapping(hp)).value
    assert np.allclose(out, aggregate_node(h_u, H, **hp), rtol=1e-12, atol=1e-12)
    perm = list(reversed(H))
    assert np.allclose(aggregate(h_u, perm, HopParams.from_mapping(hp)).value, out, rtol=0, atol=1e-12)


def test_aggregate_two_neighbors_swap_exact():
    r = np.random.default_rng(5)
    hop = HopParams.from_mapping(random_hops(r, 3, 1)[0])
    h, v1, v2 = r.normal(size=3), r.normal(size=3), r.normal(size=3)
    a = aggregate(h, [v1, v2], hop).value
    b = aggregate(h, [v2, v1], hop).value
    assert np.allclose(a, b, rtol=0, atol=1e-15)


def test_score_examples():
    assert score(np.array([1.0, 0.0]), np.array([0.0, 1.0])).value == 0.0
    e = np.array([1.0, 0.0, 0.0, 0.0])
    assert score(e, e).value == 0.5
    assert score(np.zeros(3), np.array([4.0, 5.0, 6.0])).value == 0.0
    with pytest.raises(ad.ShapeError):
        score(np.ones(2), np.ones(3))


# ------------------------------------------------------------- gid_forward


def test_empty_history_gives_zero():
    g, rows, table, hops, _, ad_item = random_instance(1)
    out = gid_forward(ad_item, [], 2, g, 3, table, rows, as_params(hops))
    assert np.array_equal(out.uii.value, np.zeros(table.shape[1]))


def test_depth_zero_single_click_is_its_embedding():
    g, rows, table, _, clicks, ad_item = random_instance(2)
    out = gid_forward(ad_item, clicks[:1], 0, g, 3, table, rows, GidParams([]))
    assert np.array_equal(out.uii.value, table[rows[clicks[0]]])


def test_five_node_graph_matches_recursive_oracle():
    # a - b - c - d - e with a chord b - d
    g = build_graph([["a", "b", "c", "d", "e"], ["b", "d"], ["b", "d"]], 1)
    rng = np.random.default_rng(42)
    d = 4
    rows = {x: k + 1 for k, x in enumerate("abcde")}
    table = rng.normal(size=(6, d))
    hops = random_hops(rng, d, 1)
    adj = adj_of(g)
    out = gid_forward("e", ["a", "c", "c"], 1, g, 10, table, rows, as_params(hops))
    ref = gid_reference(table, rows, hops, ["a", "c", "c"], lambda v: topn(adj, v, 10), table[rows["e"]])
    assert np.allclose(out.uii.value, ref, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 3), st.integers(1, 4))
def test_gid_forward_matches_recursive_oracle(seed, K, n):
    g, rows, table, hops, clicks, ad_item = random_instance(seed, K=K)
    adj = adj_of(g)
    out = gid_forward(ad_item, clicks, K, g, n, table, rows, as_params(hops))
    ref = gid_reference(table, rows, hops, clicks, lambda v: topn(adj, v, n), table[rows[ad_item]])
    assert np.allclose(out.uii.value, ref, rtol=1e-11, atol=1e-12)
    a = out.attention.value
    assert np.all(a >= 0) and abs(a.sum() - 1) <= 1e-12
    assert len(a) == len(clicks)  # duplicates keep their own slot


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_depth_zero_is_attention_over_raw_clicks(seed):
    g, rows, table, _, clicks, ad_item = random_instance(seed)
    out = gid_forward(ad_item, clicks, 0, g, 3, table, rows, GidParams([])).uii.value
    X = table[[rows[c] for c in clicks]]
    h_ad = table[rows[ad_item]]
    w = softmax(X @ h_ad / math.sqrt(len(h_ad)))
    assert np.allclose(out, w @ X, rtol=1e-12, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_neighbor_order_does_not_matter(seed):
    g, rows, table, hops, clicks, ad_item = random_instance(seed)
    base = topn_selector(g, 3)
    rng = np.random.default_rng(seed + 1)

    def shuffled(v):
        nb = list(base(v))
        rng.shuffle(nb)
        return nb

    a = gid_forward(ad_item, clicks, 2, g, 3, table, rows, as_params(hops)).uii.value
    b = gid_forward(ad_item, clicks, 2, g, 3, table, rows, as_params(hops), select=shuffled).uii.value
    assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_items_outside_the_frontier_are_irrelevant(seed):
    g, rows, table, hops, clicks, ad_item = random_instance(seed)
    adj = adj_of(g)
    from oracles import frontiers

    reach = frontiers(adj, clicks, 2, 3)[-1] | {ad_item}
    outside = [rows[x] for x in rows if x not in reach]
    before = gid_forward(ad_item, clicks, 2, g, 3, table, rows, as_params(hops)).uii.value
    poked = table.copy()
    poked[outside] += 10.0
    poked[0] += 10.0
    after = gid_forward(ad_item, clicks, 2, g, 3, poked, rows, as_params(hops)).uii.value
    assert np.array_equal(before, after)


def test_unknown_clicks_use_the_unk_row():
    g, rows, table, _, _, ad_item = random_instance(3)
    out = gid_forward(ad_item, ["never-seen"], 0, g, 3, table, rows, GidParams([])).uii.value
    assert np.array_equal(out, table[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_batch_matches_one_sample_at_a_time(seed):
    g, rows, table, hops, _, _ = random_instance(seed)
    rng = np.random.default_rng(seed)
    nbrs = NeighborIndex.build(g, rows, table.shape[0], 3)
    clicks = [rng.integers(1, table.shape[0], size=int(rng.integers(0, 5))) for _ in range(6)]
    ads = rng.integers(1, table.shape[0], size=6)
    out = intention_batch(table, as_params(hops), plan_batch(clicks, 2, nbrs), ad.gather(table, ads)).uii.value
    for i, c in enumerate(clicks):
        one = intention_batch(table, as_params(hops), plan_batch([c], 2, nbrs), ad.gather(table, ads[i : i + 1])).uii.value[0]
        assert np.allclose(out[i], one, rtol=1e-12, atol=1e-13)
        if len(c) == 0:
            assert not out[i].any()


def test_plan_frontiers_nest():
    g, rows, table, _, _, _ = random_instance(9)
    nbrs = NeighborIndex.build(g, rows, table.shape[0], 2)
    plan = plan_batch([np.array([1, 2]), np.array([5])], 3, nbrs)
    for k in range(1, 4):
        assert set(plan.levels[k]) <= set(plan.levels[k - 1])


def test_neighbor_index_rows_sorted():
    g, rows, table, _, _, _ = random_instance(4)
    nbrs = NeighborIndex.build(g, rows, table.shape[0], 4)
    for r in range(table.shape[0]):
        lst = nbrs.idx[nbrs.ptr[r] : nbrs.ptr[r + 1]]
        assert list(lst) == sorted(set(lst))
    assert nbrs.ptr[1] - nbrs.ptr[0] == 0  # UNK row never diffuses


def test_plan_errors():
    with pytest.raises(ValueError):
        plan_batch([np.array([1])], -1, None)
    with pytest.raises(ValueError):
        plan_batch([np.array([1])], 1, None)


def test_sumpool():
    table = np.arange(8.0).reshape(4, 2)
    out = sumpool_batch(table, [np.array([1, 2]), np.array([], dtype=int), np.array([3, 3])]).value
    assert np.array_equal(out, [[6, 8], [0, 0], [12, 14]])


@pytest.mark.parametrize("seed", [12, 13, 14])
def test_gradient_flows_through_gid_forward(seed):
    # directional derivatives along random directions, one per tensor
    g, rows, table, hops, clicks, ad_item = random_instance(seed, d=3)
    params = {"table": table}
    for k, h in enumerate(hops):
        params.update({f"{k}.{f}": v for f, v in h.items()})

    def loss(l):
        gp = GidParams([HopParams.from_mapping({f: l[f"{k}.{f}"] for f in hop_shapes(3)}) for k in range(2)])
        out = gid_forward(ad_item, clicks, 2, g, 3, l["table"], rows, gp)
        return ad.total(ad.sigmoid(out.uii))

    tape = ad.Tape()
    leaves = {k: tape.param(v) for k, v in params.items()}
    grads = ad.backward(tape, loss(leaves))
    rng = np.random.default_rng(seed)
    eps = 1e-6
    for name, value in params.items():
        direction = rng.normal(size=value.shape)
        shifted = lambda s: float(loss({**params, name: value + s * direction}).value)
        numeric = (shifted(eps) - shifted(-eps)) / (2 * eps)
        analytic = float(np.sum(grads[leaves[name]] * direction))
        assert abs(numeric - analytic) <= 1e-6 * max(abs(analytic), 1e-3), name
