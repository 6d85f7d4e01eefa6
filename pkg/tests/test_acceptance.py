"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` (or ``python
tests/test_acceptance.py``). The synthetic-data criteria (6 to 9) share one
set of training runs, which takes a few minutes on one core.
"""

import io
import sys
import time

import numpy as np
import pytest

from ginctr.clicklog import parse_click_log, segment_sessions, sort_events
from ginctr.cli import run as cli_run
from ginctr.cograph import build_graph, diffuse, read_graph, topn_selector, write_graph
from ginctr.ctrmodel import GinModel, TrainConfig, build_vocabs, init_params, run_gradcheck, train
from ginctr.evaluation import auc, bucket_report
from ginctr.gid import GidParams, HopParams, gid_forward, hop_shapes
from ginctr.syndata import SynConfig, generate

from oracles import frontiers, pair_auc, window_pairs

SEEDS = (0, 1, 2, 3, 4)
# shared training settings for the synthetic-data criteria
TRAIN = dict(dim=16, epochs=4, lr=3e-3, batch=256)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


# ------------------------------------------------------------------ 1


def test_criterion_1_gradient_check(capsys):
    t0 = time.perf_counter()
    rep = run_gradcheck(7, dim=8, depth=2, neighbors=3, eps=1e-5, tol=1e-4)
    took = time.perf_counter() - t0
    ok = rep.passed and rep.max_error < 1e-4 and took < 60
    report(capsys, 1, ok, f"max relative error {rep.max_error:.2e}, {len(rep.errors)} tensors, {took:.1f}s")
    assert rep.max_error < 1e-4
    assert took < 60


# ------------------------------------------------------------------ 2


def test_criterion_2_graph_build_oracle(capsys):
    rng = np.random.default_rng(2)
    items = [f"i{k:02d}" for k in range(30)]
    mismatches, diffs = 0, 0
    for _ in range(50):
        budget = int(rng.integers(1, 101))
        sessions = []
        while budget > 0:
            size = min(budget, int(rng.integers(1, 15)))
            sessions.append([items[j] for j in rng.integers(0, len(items), size=size)])
            budget -= size
        window = int(rng.integers(1, 4))
        g = build_graph(sessions, window)
        if {(u, v): w for u, v, w in g.edges()} != window_pairs(sessions, window):
            mismatches += 1
        a, b = io.StringIO(), io.StringIO()
        write_graph(g, a)
        write_graph(build_graph(sessions, window), b)
        if a.getvalue() != b.getvalue() or read_graph(io.StringIO(a.getvalue())) != g:
            diffs += 1
    ok = mismatches == 0 and diffs == 0
    report(capsys, 2, ok, f"{mismatches} weight mismatches, {diffs} file differences over 50 instances")
    assert mismatches == 0 and diffs == 0


# ------------------------------------------------------------------ 3


def test_criterion_3_diffusion_invariants(capsys):
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(100):
        n_items = int(rng.integers(2, 25))
        items = [f"i{k}" for k in range(n_items)]
        sessions = [[items[j] for j in rng.integers(0, n_items, size=int(rng.integers(1, 8)))] for _ in range(int(rng.integers(1, 12)))]
        g = build_graph(sessions, int(rng.integers(1, 4)))
        adj = {u: dict(nb) for u, nb in g.adjacency.items()}
        seeds = [items[j] for j in rng.integers(0, n_items, size=int(rng.integers(1, 5)))]
        K = int(rng.integers(0, 4))
        if diffuse(g, seeds, 0).layers != (frozenset(seeds),):
            bad += 1
        by_n = {}
        for n in (1, 3, 5):
            d = diffuse(g, seeds, K, n)
            layers = d.layers  # S^K ... S^0
            nested = all(layers[i] <= layers[i + 1] for i in range(K))
            if not nested or layers[0] != frozenset(seeds) or [set(x) for x in layers] != frontiers(adj, seeds, K, n):
                bad += 1
            by_n[n] = layers
        if not all(by_n[1][i] <= by_n[3][i] <= by_n[5][i] for i in range(K + 1)):
            bad += 1
    report(capsys, 3, bad == 0, f"{bad} violations over 100 graphs")
    assert bad == 0


# ------------------------------------------------------------------ 4


def test_criterion_4_auc_oracle(capsys):
    rng = np.random.default_rng(4)
    bad = 0 if auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75 else 1
    for _ in range(100):
        size = int(rng.integers(2, 1001))
        y = (rng.random(size) < rng.uniform(0.1, 0.9)).astype(int)
        y[0], y[1] = 0, 1
        # coarse rounding forces many tied scores
        s = np.round(rng.random(size), int(rng.integers(1, 4)))
        if auc(s, y) != pair_auc(s, y):
            bad += 1
    report(capsys, 4, bad == 0, f"{bad} inexact results over 100 instances plus the worked example")
    assert bad == 0


# ------------------------------------------------------------------ 5


def test_criterion_5_neighbor_permutation(capsys):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n_items, d, K, n = int(rng.integers(3, 15)), 4, int(rng.integers(1, 4)), int(rng.integers(1, 6))
        items = [f"i{k}" for k in range(n_items)]
        g = build_graph([[items[j] for j in rng.integers(0, n_items, size=6)] for _ in range(8)], 1)
        rows = {it: k + 1 for k, it in enumerate(items)}
        table = rng.normal(size=(n_items + 1, d))
        params = GidParams([HopParams.from_mapping({f: rng.normal(scale=0.5, size=s) for f, s in hop_shapes(d).items()}) for _ in range(K)])
        clicks = [items[j] for j in rng.integers(0, n_items, size=int(rng.integers(1, 6)))]
        ad_item = items[int(rng.integers(n_items))]
        base = topn_selector(g, n)

        def shuffled(v):
            nb = list(base(v))
            rng.shuffle(nb)
            return nb

        a = gid_forward(ad_item, clicks, K, g, n, table, rows, params).uii.value
        b = gid_forward(ad_item, clicks, K, g, n, table, rows, params, select=shuffled).uii.value
        worst = max(worst, float(np.max(np.abs(a - b))))
    report(capsys, 5, worst == 0.0, f"largest change {worst:.1e} over 100 instances")
    assert worst == 0.0


# ------------------------------------------------------------ 6 to 9


def _fit(data, g, seed, depth, neighbors, aggregator="gin"):
    cfg = TrainConfig(depth=depth, neighbors=neighbors, seed=seed, aggregator=aggregator, **TRAIN)
    params = init_params(cfg, *build_vocabs(data.train, g))
    res = train(data.train, g, cfg, params)
    scores = GinModel(res.params, g, cfg).predict(data.test)
    return scores, float(np.mean(res.epoch_seconds))


@pytest.fixture(scope="module")
def syn_runs():
    """Per seed: test AUC, bucket-0 AUC and mean epoch time for every model."""
    runs = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        data = generate(SynConfig(seed=seed))
        g = build_graph(segment_sessions(sort_events(parse_click_log(data.click_lines))), 1)
        gen_time = time.perf_counter() - t0
        y = np.array([s.label for s in data.test])
        models = {"k0": (0, 10, "gin"), "k1": (1, 10, "gin"), "k2": (2, 10, "gin"), "base": (2, 10, "sumpool-base"),
                  "k2n5": (2, 5, "gin"), "k2n20": (2, 20, "gin")}
        scores, epoch_s, wall = {}, {}, {}
        for name, (depth, n, agg) in models.items():
            t = time.perf_counter()
            scores[name], epoch_s[name] = _fit(data, g, seed, depth, n, agg)
            wall[name] = time.perf_counter() - t
        rep = bucket_report(data.test, scores)
        b0 = next(b for b in rep.per_bucket if b.bucket == 0)
        runs.append(
            dict(
                seed=seed,
                auc={m: auc(s, y) for m, s in scores.items()},
                b0=dict(b0.auc),
                epoch=epoch_s,
                depth_time=gen_time + wall["k0"] + wall["k1"] + wall["k2"],
            )
        )
    return runs


def _mean(runs, key, model):
    return float(np.mean([r[key][model] for r in runs]))


def test_criterion_6_depth_trend(capsys, syn_runs):
    a0, a1, a2 = (_mean(syn_runs, "auc", m) for m in ("k0", "k1", "k2"))
    took = sum(r["depth_time"] for r in syn_runs)
    ok = a2 >= a1 >= a0 and a2 - a0 >= 0.01 and took < 600
    per_seed = "; ".join(f"s{r['seed']} " + "/".join(f"{r['auc'][m]:.4f}" for m in ("k0", "k1", "k2")) for r in syn_runs)
    report(capsys, 6, ok, f"mean AUC K0 {a0:.4f} K1 {a1:.4f} K2 {a2:.4f}, K2-K0 {a2 - a0:+.4f}, {took:.0f}s; {per_seed}")
    assert took < 600
    assert a2 >= a1 >= a0
    assert a2 - a0 >= 0.01


def test_criterion_7_neighbor_count(capsys, syn_runs):
    a5, a20 = _mean(syn_runs, "auc", "k2n5"), _mean(syn_runs, "auc", "k2n20")
    times = [_mean(syn_runs, "epoch", m) for m in ("k2n5", "k2", "k2n20")]
    monotone = times[0] < times[1] < times[2]
    ok = a20 >= a5 - 0.002 and monotone
    report(capsys, 7, ok, f"mean AUC n=5 {a5:.4f} n=20 {a20:.4f}; s/epoch n=5,10,20: " + ", ".join(f"{t:.2f}" for t in times))
    assert monotone
    assert a20 >= a5 - 0.002


def test_criterion_8_bucket_zero(capsys, syn_runs):
    ref = _mean(syn_runs, "b0", "k0")
    gaps = {m: abs(_mean(syn_runs, "b0", m) - ref) for m in ("k1", "k2")}
    ok = all(v < 0.005 for v in gaps.values())
    report(capsys, 8, ok, f"bucket-0 AUC K0 {ref:.4f}, gaps " + ", ".join(f"{m} {v:.4f}" for m, v in gaps.items()))
    assert all(v < 0.005 for v in gaps.values())


def test_criterion_9_base_below_gin(capsys, syn_runs):
    pairs = [(r["auc"]["base"], r["auc"]["k2"]) for r in syn_runs]
    ok = all(b <= k for b, k in pairs)
    report(capsys, 9, ok, "; ".join(f"s{r['seed']} base {b:.4f} K2 {k:.4f}" for r, (b, k) in zip(syn_runs, pairs)))
    assert ok


# ------------------------------------------------------------------ 10


def _pipeline(root):
    d = root / "data"
    steps = [
        ["gen-data", "--output", str(d), "--seed", "10", "--num-users", "400", "--num-items", "200", "--num-clusters", "8"],
        ["build-graph", "--input", str(d / "clicks.tsv"), "--output", str(root / "graph.txt")],
        ["train", "--input", str(d / "train.tsv"), "--graph", str(root / "graph.txt"), "--output", str(root / "model.ckpt"),
         "--epochs", "2", "--seed", "10"],
        ["eval", "--input", str(d / "test.tsv"), "--graph", str(root / "graph.txt"), "--checkpoint", str(root / "model.ckpt"),
         "--output", str(root / "report.txt")],
    ]
    for argv in steps:
        rc = cli_run(argv, io.StringIO(), io.StringIO(), env={})
        assert rc == 0, argv[0]


def test_criterion_10_determinism(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(a)
    _pipeline(b)
    names = ("graph.txt", "model.ckpt", "report.txt")
    differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    report(capsys, 10, not differ, "identical " + ", ".join(names) if not differ else "differs: " + ", ".join(differ))
    assert not differ


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
