"""Command-line pipeline: gen-data, build-graph, train, eval, gradcheck.

Every option can also come from a ``key = value`` file passed with
``--config``; flags given on the command line win over the file. Keys use
the flag names with or without the leading dashes (``session-gap-secs`` and
``session_gap_secs`` both work). ``GIN_SEED`` supplies the seed when
neither the flags nor the file set one.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import clicklog, cograph, ctrmodel, syndata
from .evaluation import auc, bucket_report

log = logging.getLogger("ginctr")

NO_COMMAND = "a subcommand is required"
COMMANDS = ("gen-data", "build-graph", "train", "eval", "gradcheck")
COMMAND_HELP = {
    "gen-data": "write a synthetic click log and train/test samples",
    "build-graph": "sessionize a click log and save its co-occurrence graph",
    "train": "train a CTR model and save a checkpoint",
    "eval": "score one or more checkpoints, overall and per behavior length",
    "gradcheck": "compare analytic and finite-difference gradients on a small model",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# (flag, type, default, help) per subcommand; None default means "unset"
_COMMON = [
    ("config", str, None, "key = value file with option defaults"),
    ("seed", int, None, "random seed (falls back to GIN_SEED, then 0)"),
]

_SYN_DEFAULTS = syndata.SynConfig()
_SYN = [
    ("output", str, None, "directory for clicks.tsv, train.tsv, test.tsv"),
    ("num-items", int, _SYN_DEFAULTS.num_items, None),
    ("num-clusters", int, _SYN_DEFAULTS.num_clusters, None),
    ("num-users", int, _SYN_DEFAULTS.num_users, None),
    ("sessions-per-user", int, _SYN_DEFAULTS.sessions_per_user, None),
    ("session-len-min", int, _SYN_DEFAULTS.session_len_range[0], None),
    ("session-len-max", int, _SYN_DEFAULTS.session_len_range[1], None),
    ("bridge-prob", float, _SYN_DEFAULTS.bridge_prob, None),
    ("sparsity-mix", float, _SYN_DEFAULTS.sparsity_mix, None),
    ("ctr-signal", float, _SYN_DEFAULTS.ctr_signal, None),
    ("heldout-frac", float, _SYN_DEFAULTS.heldout_frac, None),
    ("heldout-bridged-prob", float, _SYN_DEFAULTS.heldout_bridged_prob, "share of held-out test ads from the bridged cluster"),
    ("train-per-user", int, _SYN_DEFAULTS.train_per_user, None),
    ("test-per-user", int, _SYN_DEFAULTS.test_per_user, None),
    ("home-ad-prob", float, _SYN_DEFAULTS.home_ad_prob, None),
    ("query-signal", float, _SYN_DEFAULTS.query_signal, None),
    ("popularity-exponent", float, _SYN_DEFAULTS.popularity_exponent, None),
    ("clicks", int, _SYN_DEFAULTS.click_length, "pre_clicks length L"),
]

_GRAPH = [
    ("input", str, None, "click log TSV"),
    ("output", str, None, "graph file to write"),
    ("window", int, 1, "co-occurrence window inside a session"),
    ("jaccard", float, 0.3, "query similarity needed to stay in a session"),
    ("session-gap-secs", int, 1800, "largest gap inside a session"),
    ("max-age-days", float, None, "drop clicks older than this, relative to the newest"),
]

_MODEL = [
    ("depth", int, 2, "diffusion depth K"),
    ("neighbors", int, 10, "top-N neighbors per node"),
    ("dim", int, 16, "embedding width d"),
    ("clicks", int, 20, "pre_clicks length L"),
    ("aggregator", str, "gin", "gin or sumpool-base"),
]

_TRAIN = [
    ("input", str, None, "training samples TSV"),
    ("graph", str, None, "graph file (required unless the model has no diffusion)"),
    ("output", str, None, "checkpoint to write"),
    ("log", str, None, "also write the training log here"),
    ("eval-input", str, None, "samples scored after training and reported in the log"),
    *_MODEL,
    ("lr", float, 1e-3, None),
    ("epochs", int, 1, None),
    ("batch", int, 64, None),
    ("threads", int, 1, "worker threads per batch"),
]

_EVAL = [
    ("input", str, None, "test samples TSV"),
    ("graph", str, None, "graph file"),
    ("checkpoint", str, None, "checkpoint, optionally name=path; repeat to compare models"),
    ("output", str, None, "text report (stdout when omitted)"),
    ("kv-output", str, None, "metric<TAB>value report"),
]

_GRADCHECK = [
    ("dim", int, 8, None),
    ("depth", int, 2, None),
    ("neighbors", int, 3, None),
    ("eps", float, 1e-5, "central difference step"),
    ("tol", float, 1e-4, "largest allowed relative error"),
]

OPTIONS = {"gen-data": _SYN, "build-graph": _GRAPH, "train": _TRAIN, "eval": _EVAL, "gradcheck": _GRADCHECK}
REQUIRED = {
    "gen-data": ("output",),
    "build-graph": ("input", "output"),
    "train": ("input", "output"),
    "eval": ("input", "checkpoint"),
    "gradcheck": (),
}
_REPEATED = {("eval", "checkpoint")}


def _key(flag: str) -> str:
    return flag.replace("-", "_")


def _all_keys() -> set[str]:
    keys = {_key(f) for f, *_ in _COMMON}
    for opts in OPTIONS.values():
        keys.update(_key(f) for f, *_ in opts)
    return keys


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ginctr", description="Graph intention CTR pipeline.")
    sub = parser.add_subparsers(dest="command", title="commands", parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=COMMAND_HELP[cmd], argument_default=argparse.SUPPRESS)
        for flag, typ, default, help_ in _COMMON + OPTIONS[cmd]:
            text = help_ or ""
            if default is not None:
                text = f"{text} (default {default})".strip()
            if (cmd, _key(flag)) in _REPEATED:
                p.add_argument(f"--{flag}", type=typ, action="append", help=text)
            else:
                p.add_argument(f"--{flag}", type=typ, help=text)
    return parser


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file. Blank lines and ``#`` comments are skipped."""
    known = _all_keys()
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = _key(key.lstrip("-"))
            if key not in known or key == "config":
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


@dataclass
class RunConfig:
    """Resolved options for one subcommand: defaults < config file < flags."""

    command: str
    values: dict[str, object] = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def resolve(cls, command: str, flags: dict[str, object], env: dict[str, str] | None = None) -> "RunConfig":
        env = os.environ if env is None else env
        known = {_key(f): (typ, default) for f, typ, default, _ in _COMMON + OPTIONS[command]}
        values = {k: default for k, (_, default) in known.items()}
        if "GIN_SEED" in env:
            values["seed"] = _convert("GIN_SEED", env["GIN_SEED"], int)
        if flags.get("config"):
            for k, raw in read_config(flags["config"]).items():
                if k not in known:
                    continue  # meant for another subcommand
                typ = known[k][0]
                if (command, k) in _REPEATED:
                    values[k] = [_convert(k, v.strip(), typ) for v in raw.split(",") if v.strip()]
                else:
                    values[k] = _convert(k, raw, typ)
        for k, v in flags.items():
            values[k] = v
        if values.get("seed") is None:
            values["seed"] = 0
        for k in REQUIRED[command]:
            if not values.get(k):
                raise UsageError(f"{command}: --{k.replace('_', '-')} is required")
        return cls(command, values)

    def session_config(self) -> clicklog.SessionConfig:
        return clicklog.SessionConfig(jaccard_threshold=self.jaccard, max_gap_seconds=self.session_gap_secs)

    def train_config(self) -> ctrmodel.TrainConfig:
        return ctrmodel.TrainConfig(
            depth=self.depth,
            neighbors=self.neighbors,
            dim=self.dim,
            clicks=self.clicks,
            lr=self.lr,
            epochs=self.epochs,
            batch=self.batch,
            seed=self.seed,
            aggregator=self.aggregator,
            threads=self.threads,
        )

    def syn_config(self) -> syndata.SynConfig:
        return syndata.SynConfig(
            num_items=self.num_items,
            num_clusters=self.num_clusters,
            num_users=self.num_users,
            sessions_per_user=self.sessions_per_user,
            session_len_range=(self.session_len_min, self.session_len_max),
            bridge_prob=self.bridge_prob,
            sparsity_mix=self.sparsity_mix,
            ctr_signal=self.ctr_signal,
            seed=self.seed,
            heldout_frac=self.heldout_frac,
            heldout_bridged_prob=self.heldout_bridged_prob,
            train_per_user=self.train_per_user,
            test_per_user=self.test_per_user,
            home_ad_prob=self.home_ad_prob,
            query_signal=self.query_signal,
            popularity_exponent=self.popularity_exponent,
            click_length=self.clicks,
        )


def _convert(key: str, raw: str, typ):
    try:
        return typ(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


# ---------------------------------------------------------------- commands


def cmd_gen_data(rc: RunConfig, out) -> None:
    cfg = rc.syn_config()
    data = syndata.generate(cfg)
    d = Path(rc.output)
    d.mkdir(parents=True, exist_ok=True)
    syndata.write_dataset(data, d / "clicks.tsv", d / "train.tsv", d / "test.tsv")
    print(f"clicks\t{len(data.click_lines)}", file=out)
    print(f"sessions\t{data.num_sessions}", file=out)
    print(f"train\t{len(data.train)}", file=out)
    print(f"test\t{len(data.test)}", file=out)


def cmd_build_graph(rc: RunConfig, out) -> None:
    events = clicklog.read_click_log(rc.input)
    events = clicklog.filter_recent(events, rc.max_age_days)
    sessions = clicklog.segment_sessions(clicklog.sort_events(events), rc.session_config())
    g = cograph.build_graph(sessions, window=rc.window)
    cograph.save_graph(g, rc.output)
    print(f"events\t{len(events)}", file=out)
    print(f"sessions\t{len(sessions)}", file=out)
    print(f"nodes\t{g.num_nodes}", file=out)
    print(f"edges\t{g.num_edges}", file=out)


def _load_graph(path, depth: int) -> cograph.CoGraph | None:
    if path:
        return cograph.load_graph(path)
    if depth > 0:
        raise UsageError("--graph is required when the model diffuses over the graph (depth > 0)")
    return None


def _metric_lines(prefix: str, model: ctrmodel.GinModel, samples) -> list[str]:
    scores = model.predict(samples)
    labels = [s.label for s in samples]
    lines = [f"{prefix}.logloss\t{ctrmodel.cross_entropy(scores, labels):.17g}"]
    if 0 < sum(labels) < len(labels):
        lines.insert(0, f"{prefix}.auc\t{auc(scores, labels):.17g}")
    return lines


def cmd_train(rc: RunConfig, out) -> None:
    cfg = rc.train_config()
    g = _load_graph(rc.graph, cfg.gid_depth)
    data = ctrmodel.read_samples(rc.input, cfg.clicks)
    lines: list[str] = []

    def on_epoch(epoch, loss):
        lines.append(f"epoch{epoch + 1}.loss\t{loss:.17g}")
        print(lines[-1], file=out, flush=True)

    result = ctrmodel.train(data, g, cfg, on_epoch=on_epoch)
    ctrmodel.save_checkpoint(result.params, rc.output)
    model = ctrmodel.GinModel(result.params, g, cfg)
    final = _metric_lines("train", model, data)
    if rc.eval_input:
        final += _metric_lines("eval", model, ctrmodel.read_samples(rc.eval_input, cfg.clicks))
    for line in final:
        print(line, file=out)
    lines += final
    if rc.log:
        Path(rc.log).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _model_names(specs: list[str]) -> list[tuple[str, str]]:
    named = []
    for arg in specs:
        name, sep, path = arg.partition("=")
        if not sep:
            name, path = Path(arg).stem, arg
        named.append((name, path))
    seen: dict[str, int] = {}
    out = []
    for name, path in named:
        seen[name] = seen.get(name, 0) + 1
        out.append((name if seen[name] == 1 else f"{name}#{seen[name]}", path))
    return out


def cmd_eval(rc: RunConfig, out) -> None:
    checkpoints = _model_names(rc.checkpoint)
    graph = cograph.load_graph(rc.graph) if rc.graph else None
    scores = {}
    samples = None
    for name, path in checkpoints:
        params = ctrmodel.load_checkpoint(path)
        cfg = params.config(seed=rc.seed)
        if cfg.gid_depth > 0 and graph is None:
            raise UsageError(f"--graph is required to evaluate {name} (depth {params.depth})")
        if samples is None:
            samples = ctrmodel.read_samples(rc.input, cfg.clicks)
        model = ctrmodel.GinModel(params, graph, cfg)
        scores[name] = model.predict(samples)
    report = bucket_report(samples, scores)
    text = report.to_text()
    if rc.output:
        Path(rc.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if rc.kv_output:
        Path(rc.kv_output).write_text(report.to_kv(), encoding="utf-8")


def cmd_gradcheck(rc: RunConfig, out) -> bool:
    t0 = time.perf_counter()
    report = ctrmodel.run_gradcheck(rc.seed, dim=rc.dim, depth=rc.depth, neighbors=rc.neighbors, eps=rc.eps, tol=rc.tol)
    log.info("gradcheck took %.1fs", time.perf_counter() - t0)
    print(str(report), file=out)
    return report.passed


HANDLERS = {
    "gen-data": cmd_gen_data,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}

DATA_ERRORS = (
    OSError,
    ValueError,
    clicklog.ClickLogError,
    cograph.GraphFormatError,
    ctrmodel.SampleFormatError,
    ctrmodel.CheckpointError,
    ctrmodel.TrainingError,
)


def run(argv=None, out=None, err=None, env=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError(NO_COMMAND)
        flags = {k: v for k, v in vars(ns).items() if k != "command"}
        rc = RunConfig.resolve(ns.command, flags, env)
    except UsageError as exc:
        err.write(parser.format_help() if str(exc) == NO_COMMAND else parser.format_usage())
        err.write(f"error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except DATA_ERRORS as exc:  # unreadable config file
        err.write(f"error: {exc}\n")
        return 2
    try:
        ok = HANDLERS[rc.command](rc, out)
    except UsageError as exc:
        err.write(f"error: {exc}\n")
        return 1
    except DATA_ERRORS as exc:
        err.write(f"error: {exc}\n")
        return 2
    return 2 if ok is False else 0


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    sys.exit(run())
