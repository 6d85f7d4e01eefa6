"""Seeded synthetic click logs and CTR samples with planted cluster structure.

Items are split evenly into clusters arranged on a ring; cluster ``c`` is
"bridged" to cluster ``c + 1``. Every user has a home cluster and clicks
mostly inside it, with item popularity following a Zipf law. With
probability ``bridge_prob`` a session wanders across the bridge: the user
clicks the home cluster's gateway item (its most popular), then the bridged
cluster's gateway, then a few bridged items. Those crossings are the only
inter-cluster co-clicks, so the co-occurrence graph ends up with dense
clusters joined by a few heavy gateway edges.

A CTR label is positive with probability ``sigmoid(ctr_signal * a)`` where
the affinity ``a`` is +1 when the ad sits in the user's home or bridged
cluster and -1 otherwise. Training ads come from the home cluster or from
unrelated clusters only, so the bridged preference is never labeled
directly. Held-out users never cross a bridge themselves and appear only in
the test set, where their ads come from the bridged cluster or from
unrelated ones: their history alone cannot tell those apart, the graph can.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ctrmodel import Sample, format_sample

BASE_TIME = 1_700_000_000


@dataclass(frozen=True)
class SynConfig:
    num_items: int = 2000
    num_clusters: int = 20
    num_users: int = 5000
    sessions_per_user: int = 4
    session_len_range: tuple[int, int] = (3, 8)
    bridge_prob: float = 0.1
    sparsity_mix: float = 0.4
    ctr_signal: float = 2.0
    seed: int = 0
    heldout_frac: float = 0.2
    train_per_user: int = 10
    test_per_user: int = 1
    home_ad_prob: float = 0.5
    query_signal: float = 0.5
    popularity_exponent: float = 1.0
    click_length: int = 20
    # chance a held-out test ad comes from the bridged cluster, not an unrelated one
    heldout_bridged_prob: float = 0.5

    def __post_init__(self):
        if self.num_clusters < 3:
            raise ValueError("need at least 3 clusters (home, bridged, unrelated)")
        if self.num_items < self.num_clusters:
            raise ValueError("num_items must be >= num_clusters (cluster size 0)")
        lo, hi = self.session_len_range
        if not 1 <= lo <= hi:
            raise ValueError("session_len_range must satisfy 1 <= lo <= hi")
        for name in ("bridge_prob", "sparsity_mix", "heldout_frac", "home_ad_prob", "query_signal", "heldout_bridged_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.num_users < 1 or self.sessions_per_user < 1:
            raise ValueError("num_users and sessions_per_user must be positive")


@dataclass
class SynData:
    click_lines: list[str]
    train: list[Sample]
    test: list[Sample]
    item_cluster: dict[str, int] = field(repr=False)
    user_home: dict[str, int] = field(repr=False)
    heldout: frozenset[str] = field(repr=False)
    num_sessions: int = 0


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def bridged(cluster: int, num_clusters: int) -> int:
    return (cluster + 1) % num_clusters


def expected_label_rate(cfg: SynConfig) -> float:
    """Mean label over train + test implied by the sampling design."""
    pos, neg = _sigmoid(cfg.ctr_signal), _sigmoid(-cfg.ctr_signal)
    regular = cfg.home_ad_prob * pos + (1 - cfg.home_ad_prob) * neg
    heldout = cfg.heldout_bridged_prob * pos + (1 - cfg.heldout_bridged_prob) * neg
    n_held = round(cfg.heldout_frac * cfg.num_users)
    n_reg = cfg.num_users - n_held
    w_reg = n_reg * (cfg.train_per_user + cfg.test_per_user)
    w_held = n_held * cfg.test_per_user
    return (w_reg * regular + w_held * heldout) / (w_reg + w_held)


def generate(cfg: SynConfig) -> SynData:
    rng = np.random.default_rng(cfg.seed)
    C = cfg.num_clusters
    clusters = np.array_split(np.arange(cfg.num_items), C)
    width = len(str(cfg.num_items - 1))
    item_name = [f"i{i:0{width}d}" for i in range(cfg.num_items)]
    item_cluster = {item_name[i]: c for c, members in enumerate(clusters) for i in members}
    popularity = []
    for members in clusters:
        w = 1.0 / np.arange(1, len(members) + 1) ** cfg.popularity_exponent
        popularity.append(w / w.sum())
    gateway = [members[0] for members in clusters]

    def draw(c: int, size: int) -> list[int]:
        return list(rng.choice(clusters[c], size=size, p=popularity[c]))

    U = cfg.num_users
    uwidth = len(str(U - 1))
    users = [f"u{u:0{uwidth}d}" for u in range(U)]
    home = rng.integers(0, C, size=U)
    n_sparse = round(cfg.sparsity_mix * U)
    n_held = round(cfg.heldout_frac * U)
    sparse = np.zeros(U, bool)
    sparse[rng.permutation(U)[:n_sparse]] = True
    held = np.zeros(U, bool)
    held[rng.permutation(U)[:n_held]] = True

    lo, hi = cfg.session_len_range
    click_lines: list[str] = []
    history: list[list[str]] = []
    num_sessions = 0
    for u in range(U):
        c = int(home[u])
        t = BASE_TIME + int(rng.integers(0, 3600))
        clicks: list[str] = []
        if sparse[u]:
            plan = [int(rng.integers(0, 3))]
        else:
            plan = [int(rng.integers(lo, hi + 1)) for _ in range(cfg.sessions_per_user)]
        for length in plan:
            if length == 0:
                continue
            num_sessions += 1
            query = f"c{c} t{int(rng.integers(0, 3))}"
            if not sparse[u] and not held[u] and rng.random() < cfg.bridge_prob:
                cut = int(rng.integers(1, length + 1))
                seq = draw(c, cut) + [gateway[c], gateway[bridged(c, C)]] + draw(bridged(c, C), length - cut)
            else:
                seq = draw(c, length)
            for i in seq:
                click_lines.append(f"{users[u]}\t{t}\t{query}\t{item_name[i]}")
                clicks.append(item_name[i])
                t += int(rng.integers(20, 300))
            t += 7200
        history.append(clicks)

    pos_rate = _sigmoid(cfg.ctr_signal)
    neg_rate = _sigmoid(-cfg.ctr_signal)

    def sample(u: int, ad_cluster: int) -> Sample:
        c = int(home[u])
        ad_item = item_name[draw(ad_cluster, 1)[0]]
        liked = ad_cluster in (c, bridged(c, C))
        label = int(rng.random() < (pos_rate if liked else neg_rate))
        if rng.random() < cfg.query_signal:
            query = f"c{c} t{int(rng.integers(0, 3))}"
        else:
            query = f"g{int(rng.integers(0, 5))}"
        clicks = tuple(history[u][-cfg.click_length :])
        return Sample(query, users[u], ad_item, clicks, label)

    def unrelated_cluster(c: int) -> int:
        k = int(rng.integers(0, C - 2))
        # skip over c and its bridged neighbor on the ring
        return (c + 2 + k) % C

    def regular_cluster(c: int) -> int:
        return c if rng.random() < cfg.home_ad_prob else unrelated_cluster(c)

    def heldout_cluster(c: int) -> int:
        return bridged(c, C) if rng.random() < cfg.heldout_bridged_prob else unrelated_cluster(c)

    train, test = [], []
    for u in range(U):
        c = int(home[u])
        if held[u]:
            test.extend(sample(u, heldout_cluster(c)) for _ in range(cfg.test_per_user))
        else:
            train.extend(sample(u, regular_cluster(c)) for _ in range(cfg.train_per_user))
            test.extend(sample(u, regular_cluster(c)) for _ in range(cfg.test_per_user))

    return SynData(
        click_lines=click_lines,
        train=train,
        test=test,
        item_cluster=item_cluster,
        user_home={users[u]: int(home[u]) for u in range(U)},
        heldout=frozenset(users[u] for u in range(U) if held[u]),
        num_sessions=num_sessions,
    )


def write_dataset(data: SynData, click_path, train_path, test_path) -> None:
    with open(click_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# user_id\ttimestamp\tquery\titem_id\n")
        for line in data.click_lines:
            fh.write(line + "\n")
    for path, samples in ((train_path, data.train), (test_path, data.test)):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in samples:
                fh.write(format_sample(s) + "\n")
