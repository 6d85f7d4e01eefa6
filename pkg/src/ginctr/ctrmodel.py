"""CTR model: feature concat over an intention vector, 5-layer MLP, log loss.

Features per sample are ``[h_query || h_user || h_ad || h]`` where ``h`` is
the graph intention vector (or, for the pooled baseline, the plain sum of
click embeddings). Ads and clicked items share one embedding table.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .cograph import CoGraph, build_graph
from .gid import HOP_FIELDS, GidParams, HopParams, NeighborIndex, hop_shapes, intention_batch, plan_batch, sumpool_batch

log = logging.getLogger(__name__)

AGGREGATORS = ("gin", "sumpool-base")
UNK = "<unk>"


class SampleFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def normalize_query(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Sample:
    query: str
    user_id: str
    ad_item: str
    pre_clicks: tuple[str, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise SampleFormatError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "pre_clicks", tuple(self.pre_clicks))

    def truncated(self, length: int) -> "Sample":
        """Keep only the ``length`` most recent clicks."""
        if len(self.pre_clicks) <= length:
            return self
        return replace(self, pre_clicks=self.pre_clicks[len(self.pre_clicks) - length :])


def format_sample(s: Sample) -> str:
    return f"{s.label}\t{s.query}\t{s.user_id}\t{s.ad_item}\t{','.join(s.pre_clicks)}"


def parse_samples(lines: Iterable[str], click_length: int | None = None) -> list[Sample]:
    """Parse ``label<TAB>query<TAB>user<TAB>ad<TAB>c1,c2,...`` lines.

    Clicks are oldest first; with ``click_length`` only the most recent are
    kept.
    """
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise SampleFormatError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
        label, query, user, ad_item, clicks = parts
        if label not in ("0", "1"):
            raise SampleFormatError(f"line {lineno}: label must be 0 or 1, got {label!r}")
        if not ad_item:
            raise SampleFormatError(f"line {lineno}: empty ad id")
        click_ids = tuple(c for c in clicks.split(",") if c) if clicks else ()
        s = Sample(normalize_query(query), user, ad_item, click_ids, int(label))
        out.append(s.truncated(click_length) if click_length is not None else s)
    return out


def read_samples(path, click_length: int | None = None) -> list[Sample]:
    with open(path, encoding="utf-8") as fh:
        return parse_samples(fh, click_length)


def write_samples(samples: Iterable[Sample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(format_sample(s) + "\n")


class Vocab:
    """String id -> row index, with row 0 reserved for unknown ids."""

    def __init__(self, ids: Iterable[str]):
        self.ids = [UNK] + sorted(set(ids) - {UNK})
        self.rows = {k: i for i, k in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, key: str) -> int:
        return self.rows.get(key, 0)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.ids == other.ids

    @classmethod
    def from_rows(cls, ids: Sequence[str]) -> "Vocab":
        if not ids or ids[0] != UNK:
            raise CheckpointError("vocabulary must start with the UNK row")
        v = cls.__new__(cls)
        v.ids = list(ids)
        v.rows = {k: i for i, k in enumerate(v.ids)}
        return v


@dataclass(frozen=True)
class TrainConfig:
    depth: int = 2
    neighbors: int = 10
    dim: int = 16
    clicks: int = 20
    lr: float = 1e-3
    epochs: int = 1
    batch: int = 64
    seed: int = 0
    aggregator: str = "gin"
    hidden: tuple[int, ...] = (64, 32, 16, 8)
    threads: int = 1

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        for name in ("neighbors", "dim", "clicks", "batch", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")
        if len(self.hidden) != 4 or min(self.hidden) < 1:
            raise ValueError("hidden must list four positive widths (5 affine layers)")

    @property
    def gid_depth(self) -> int:
        return self.depth if self.aggregator == "gin" else 0


@dataclass
class ModelParams:
    tensors: dict[str, np.ndarray]
    items: Vocab
    queries: Vocab
    users: Vocab
    dim: int
    depth: int
    hidden: tuple[int, ...]
    aggregator: str = "gin"
    # not shapes, but needed to rebuild the same model from a checkpoint
    neighbors: int = 10
    clicks: int = 20

    @property
    def mlp_layers(self) -> int:
        return len(self.hidden) + 1

    def gid(self, source: Mapping[str, object] | None = None) -> GidParams:
        src = self.tensors if source is None else source
        return GidParams([HopParams.from_mapping({f: src[f"gid.{k}.{f}"] for f in HOP_FIELDS}) for k in range(1, self.depth + 1)])

    def config(self, **overrides) -> TrainConfig:
        """A TrainConfig matching these parameters."""
        base = dict(depth=self.depth, neighbors=self.neighbors, dim=self.dim, clicks=self.clicks, aggregator=self.aggregator, hidden=self.hidden)
        base.update(overrides)
        return TrainConfig(**base)

    def copy(self) -> "ModelParams":
        return replace(self, tensors={k: v.copy() for k, v in self.tensors.items()})


def param_shapes(dim: int, depth: int, hidden: Sequence[int], n_items: int, n_queries: int, n_users: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "item_table": (n_items, dim),
        "query_table": (n_queries, dim),
        "user_table": (n_users, dim),
    }
    for k in range(1, depth + 1):
        for f, shp in hop_shapes(dim).items():
            shapes[f"gid.{k}.{f}"] = shp
    widths = [4 * dim, *hidden, 1]
    for i in range(len(widths) - 1):
        shapes[f"mlp.{i}.W"] = (widths[i + 1], widths[i])
        shapes[f"mlp.{i}.b"] = (widths[i + 1],)
    return shapes


def _is_bias(name: str) -> bool:
    return name.endswith(".b") or name.endswith(".m")


def init_params(
    cfg: TrainConfig,
    items: Vocab,
    queries: Vocab,
    users: Vocab,
    seed: int | None = None,
    scale: float = 0.05,
    bias_scale: float = 0.0,
    weight_init: str = "near_identity",
) -> ModelParams:
    """Fresh parameters: embedding rows ~ Uniform(-scale, scale), biases zero.

    Weights of affine maps (MLP layers, W/M/B/z of every hop) are drawn from
    Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in)); at a fixed +-0.05 the
    5-layer ReLU stack starts with a vanishing signal and never trains.

    Each tensor draws from its own stream keyed by (seed, tensor name), so
    models that differ only in which tensors they have (say K=0 vs K=2)
    start from identical values for the tensors they share.

    A nonzero ``bias_scale`` draws biases from Uniform(-bias_scale,
    bias_scale) instead; gradient checks use it to keep ReLU inputs off the
    kink when a whole input row is zero.

    With ``weight_init="near_identity"`` (the default) each hop's M starts at
    I and its B at [I | I], both plus a tenth of the fan-in draw, so a fresh
    hop passes ReLU(h + n) through instead of scrambling the embedding space
    the ad is scored in. ``"fan_in"`` skips that offset. ``"uniform"`` draws
    every weight, affine or not, from Uniform(-scale, scale).
    """
    if weight_init not in ("near_identity", "fan_in", "uniform"):
        raise ValueError(f"unknown weight_init {weight_init!r}")
    seed = cfg.seed if seed is None else seed
    depth = cfg.gid_depth
    shapes = param_shapes(cfg.dim, depth, cfg.hidden, len(items), len(queries), len(users))
    tensors = {}
    for name, shape in shapes.items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        if _is_bias(name):
            tensors[name] = rng.uniform(-bias_scale, bias_scale, size=shape) if bias_scale else np.zeros(shape)
            continue
        if name.endswith("_table") or weight_init == "uniform":
            limit = scale
        else:
            limit = math.sqrt(6.0 / shape[-1])
        tensors[name] = rng.uniform(-limit, limit, size=shape)
        if weight_init == "near_identity" and name.startswith("gid.") and name[-1] in "MB":
            eye = np.eye(cfg.dim)
            tensors[name] = 0.1 * tensors[name] + (np.hstack([eye, eye]) if name[-1] == "B" else eye)
    return ModelParams(tensors, items, queries, users, cfg.dim, depth, tuple(cfg.hidden), cfg.aggregator, cfg.neighbors, cfg.clicks)


def build_vocabs(samples: Iterable[Sample], g: CoGraph | None = None) -> tuple[Vocab, Vocab, Vocab]:
    """Item, query and user vocabularies; items also cover every graph node."""
    samples = list(samples)
    item_ids = set(g.nodes) if g is not None else set()
    for s in samples:
        item_ids.add(s.ad_item)
        item_ids.update(s.pre_clicks)
    return Vocab(item_ids), Vocab(s.query for s in samples), Vocab(s.user_id for s in samples)


@dataclass
class Encoded:
    """Samples mapped to vocabulary rows."""

    query: np.ndarray
    user: np.ndarray
    ad: np.ndarray
    clicks: list[np.ndarray]
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, idx: np.ndarray) -> "Encoded":
        return Encoded(self.query[idx], self.user[idx], self.ad[idx], [self.clicks[i] for i in idx], self.labels[idx])


def encode(samples: Sequence[Sample], p: ModelParams, click_length: int) -> Encoded:
    clicks = []
    for s in samples:
        recent = s.pre_clicks[max(0, len(s.pre_clicks) - click_length) :]
        clicks.append(np.fromiter((p.items[c] for c in recent), dtype=np.intp, count=len(recent)))
    return Encoded(
        query=np.fromiter((p.queries[s.query] for s in samples), dtype=np.intp, count=len(samples)),
        user=np.fromiter((p.users[s.user_id] for s in samples), dtype=np.intp, count=len(samples)),
        ad=np.fromiter((p.items[s.ad_item] for s in samples), dtype=np.intp, count=len(samples)),
        clicks=clicks,
        labels=np.fromiter((s.label for s in samples), dtype=np.float64, count=len(samples)),
    )


class GinModel:
    """Parameters bound to a graph and a neighbor index, ready for forward passes."""

    def __init__(self, params: ModelParams, graph: CoGraph | None, cfg: TrainConfig):
        if params.dim != cfg.dim or params.hidden != tuple(cfg.hidden) or params.aggregator != cfg.aggregator:
            raise CheckpointError("parameters do not match the configuration")
        if params.depth != cfg.gid_depth:
            raise CheckpointError(f"parameters have depth {params.depth}, configuration expects {cfg.gid_depth}")
        self.params = params
        self.graph = graph
        self.cfg = cfg
        self.neighbors = None
        if params.depth > 0:
            if graph is None:
                raise ValueError("a graph is required for depth > 0")
            self.neighbors = NeighborIndex.build(graph, params.items.rows, len(params.items), cfg.neighbors)

    def encode(self, samples: Sequence[Sample]) -> Encoded:
        return encode(samples, self.params, self.cfg.clicks)

    def pctr(self, t: Mapping[str, Tensor | np.ndarray], batch: Encoded) -> Tensor:
        """Predicted CTR per sample of ``batch``, built from tensors ``t``."""
        p = self.params
        h_query = ad.gather(t["query_table"], batch.query)
        h_user = ad.gather(t["user_table"], batch.user)
        h_ad = ad.gather(t["item_table"], batch.ad)
        if p.aggregator == "sumpool-base":
            h = sumpool_batch(t["item_table"], batch.clicks)
        else:
            plan = plan_batch(batch.clicks, p.depth, self.neighbors)
            h = intention_batch(t["item_table"], p.gid(t), plan, h_ad).uii
        x = ad.concat([h_query, h_user, h_ad, h], axis=1)
        last = p.mlp_layers - 1
        for i in range(p.mlp_layers):
            x = ad.affine(t[f"mlp.{i}.W"], x, t[f"mlp.{i}.b"])
            if i < last:
                x = ad.relu(x)
        return ad.sigmoid(_column(x))

    def predict(self, samples: Sequence[Sample] | Encoded, batch: int = 256) -> np.ndarray:
        enc = samples if isinstance(samples, Encoded) else self.encode(samples)
        out = np.empty(len(enc))
        for start in range(0, len(enc), batch):
            idx = np.arange(start, min(start + batch, len(enc)))
            out[idx] = self.pctr(self.params.tensors, enc.take(idx)).value
        return out

    def loss_and_grads(self, batch: Encoded, weight: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
        """Log loss on ``batch`` times ``weight``, and its gradient for every tensor."""
        tape = Tape()
        leaves = {k: tape.param(v, name=k) for k, v in self.params.tensors.items()}
        loss = ad.binary_cross_entropy(self.pctr(leaves, batch), batch.labels)
        if weight != 1.0:
            loss = ad.scale(loss, weight)
        grads = ad.backward(tape, loss)
        return float(loss.value), {k: grads[leaf] for k, leaf in leaves.items()}


def _column(x: Tensor) -> Tensor:
    """``[r, 1]`` logits -> ``[r]``."""
    return ad.affine(x, ad.constant(np.ones(1)))


def forward(s: Sample, p: ModelParams, g: CoGraph | None, cfg: TrainConfig) -> float:
    """pctr for one sample. Builds a :class:`GinModel`; reuse one for many samples."""
    return float(GinModel(p, g, cfg).predict([s])[0])


def cross_entropy(pctrs: Sequence[float], labels: Sequence[int]) -> float:
    if len(pctrs) == 0:
        raise ValueError("cross_entropy: empty batch")
    if len(pctrs) != len(labels):
        raise ValueError("cross_entropy: length mismatch")
    return float(ad.binary_cross_entropy(ad.constant(np.asarray(pctrs, dtype=float)), labels).value)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in params:
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def train(
    data: Sequence[Sample],
    g: CoGraph | None,
    cfg: TrainConfig,
    params: ModelParams | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Mini-batch Adam on the mean log loss, updating every tensor jointly.

    Vocabularies are built from ``data`` and ``g`` unless ``params`` is given,
    in which case those tensors are updated in place.
    ``history[e]`` is the sample-weighted mean training loss during epoch ``e``.
    """
    if not data:
        raise ValueError("train: no samples")
    if params is None:
        params = init_params(cfg, *build_vocabs(data, g))
    model = GinModel(params, g, cfg)
    enc = model.encode(data)
    opt = Adam(cfg.lr)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    result = TrainResult(params)
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = rng.permutation(len(enc))
            total = 0.0
            for b, start in enumerate(range(0, len(order), cfg.batch)):
                idx = order[start : start + cfg.batch]
                loss, grads = _batch_step(model, enc, idx, pool, cfg.threads)
                if not math.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in grads.values()):
                    raise TrainingError(f"non-finite loss or gradient in epoch {epoch + 1}, batch {b} (loss={loss})")
                opt.step(params.tensors, grads)
                total += loss * len(idx)
            mean_loss = total / len(enc)
            result.history.append(mean_loss)
            result.epoch_seconds.append(time.perf_counter() - t0)
            log.info("epoch %d loss %.6f (%.1fs)", epoch + 1, mean_loss, result.epoch_seconds[-1])
            if on_epoch is not None:
                on_epoch(epoch, mean_loss)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def _batch_step(model: GinModel, enc: Encoded, idx: np.ndarray, pool, threads: int):
    if pool is None or len(idx) < 2:
        return model.loss_and_grads(enc.take(idx))
    chunks = [c for c in np.array_split(idx, threads) if len(c)]
    futures = [pool.submit(model.loss_and_grads, enc.take(c), len(c) / len(idx)) for c in chunks]
    results = [f.result() for f in futures]
    # fixed chunk order keeps the sum deterministic
    loss, grads = results[0]
    grads = {k: v.copy() for k, v in grads.items()}
    for chunk_loss, chunk_grads in results[1:]:
        loss += chunk_loss
        for k, v in chunk_grads.items():
            grads[k] += v
    return loss, grads


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = "GINCKPT v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_checkpoint(p: ModelParams, path) -> None:
    """Write parameters and vocabularies as text, 17 significant digits per value."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CKPT_MAGIC + "\n")
        fh.write(f"dim {p.dim}\ndepth {p.depth}\naggregator {p.aggregator}\n")
        fh.write("hidden " + " ".join(str(h) for h in p.hidden) + "\n")
        fh.write(f"neighbors {p.neighbors}\nclicks {p.clicks}\n")
        for name, vocab in (("items", p.items), ("queries", p.queries), ("users", p.users)):
            fh.write(f"vocab {name} {len(vocab)}\n")
            for key in vocab.ids:
                fh.write(key + "\n")
        for name, arr in p.tensors.items():
            fh.write(f"tensor {name} " + " ".join(str(s) for s in arr.shape) + "\n")
            rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
            for row in rows:
                fh.write(" ".join(_fmt(x) for x in row) + "\n")
        fh.write("end\n")


def load_checkpoint(path, cfg: TrainConfig | None = None) -> ModelParams:
    """Read a checkpoint; with ``cfg`` its shapes must match the configuration."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise CheckpointError(f"unexpected end of checkpoint after line {pos}")
        pos += 1
        return lines[pos - 1]

    def keyed(key: str) -> list[str]:
        parts = take().split(" ")
        if parts[0] != key:
            raise CheckpointError(f"line {pos}: expected {key!r}, got {parts[0]!r}")
        return parts[1:]

    if take() != CKPT_MAGIC:
        raise CheckpointError("line 1: not a checkpoint file")
    try:
        dim = int(keyed("dim")[0])
        depth = int(keyed("depth")[0])
        aggregator = keyed("aggregator")[0]
        hidden = tuple(int(h) for h in keyed("hidden"))
        neighbors = int(keyed("neighbors")[0])
        clicks = int(keyed("clicks")[0])
        vocabs = []
        for name in ("items", "queries", "users"):
            head = keyed("vocab")
            if head[0] != name:
                raise CheckpointError(f"line {pos}: expected vocab {name}")
            vocabs.append(Vocab.from_rows([take() for _ in range(int(head[1]))]))
        shapes = param_shapes(dim, depth, hidden, *(len(v) for v in vocabs))
        tensors = {}
        while True:
            parts = take().split(" ")
            if parts == ["end"]:
                break
            if parts[0] != "tensor":
                raise CheckpointError(f"line {pos}: expected tensor header")
            name, shape = parts[1], tuple(int(s) for s in parts[2:])
            if shapes.get(name) != shape:
                raise CheckpointError(f"line {pos}: tensor {name} has shape {shape}, expected {shapes.get(name)}")
            nrows = shape[0] if len(shape) > 1 else 1
            rows = [np.array(take().split(" "), dtype=np.float64) for _ in range(nrows)]
            arr = np.stack(rows).reshape(shape)
            tensors[name] = arr
    except (ValueError, IndexError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"line {pos}: {exc}") from None
    if set(tensors) != set(shapes):
        raise CheckpointError(f"missing tensors: {sorted(set(shapes) - set(tensors))}")
    p = ModelParams({k: tensors[k] for k in shapes}, *vocabs, dim=dim, depth=depth, hidden=hidden, aggregator=aggregator, neighbors=neighbors, clicks=clicks)
    if cfg is not None:
        expected = (cfg.dim, cfg.gid_depth, tuple(cfg.hidden), cfg.aggregator)
        if (dim, depth, hidden, aggregator) != expected:
            raise CheckpointError(f"checkpoint (dim, depth, hidden, aggregator) = {(dim, depth, hidden, aggregator)} does not match configuration {expected}")
    return p


# ------------------------------------------------------------ gradient check


def gradcheck_instance(
    seed: int,
    dim: int = 8,
    depth: int = 2,
    neighbors: int = 3,
    num_items: int = 20,
    num_samples: int = 4,
) -> tuple[GinModel, Encoded]:
    """Small random model and batch for an end-to-end finite-difference check.

    Item tables are drawn at scale 1 and biases at scale 0.5 so that hidden
    units sit well away from the ReLU kink and gradients are not so tiny
    that central differences drown in roundoff.
    """
    rng = np.random.default_rng([seed, 0x6C4])
    items = [f"i{i:02d}" for i in range(num_items)]
    # a ring guarantees every item is a graph node; random sessions add chords
    sessions = [[items[i], items[(i + 1) % num_items]] for i in range(num_items)]
    sessions += [[items[j] for j in rng.integers(0, num_items, size=6)] for _ in range(num_items)]
    g = build_graph(sessions, window=1)
    samples = []
    for k in range(num_samples):
        n_clicks = int(rng.integers(1, 6))
        clicks = tuple(items[j] for j in rng.integers(0, num_items, size=n_clicks))
        samples.append(Sample(f"q{k % 3}", f"u{k % 4}", items[int(rng.integers(num_items))], clicks, k % 2))
    cfg = TrainConfig(depth=depth, neighbors=neighbors, dim=dim, seed=seed)
    params = init_params(cfg, *build_vocabs(samples, g), scale=1.0, bias_scale=0.5, weight_init="fan_in")
    model = GinModel(params, g, cfg)
    return model, model.encode(samples)


def run_gradcheck(seed: int, dim: int = 8, depth: int = 2, neighbors: int = 3, eps: float = 1e-5, tol: float = 1e-4) -> ad.GradCheckReport:
    """Log loss of :func:`gradcheck_instance` checked over every tensor."""
    model, enc = gradcheck_instance(seed, dim=dim, depth=depth, neighbors=neighbors)

    def loss_fn(tape, leaves):
        return ad.binary_cross_entropy(model.pctr(leaves, enc), enc.labels)

    return ad.grad_check(loss_fn, model.params.tensors, eps=eps, tol=tol)
