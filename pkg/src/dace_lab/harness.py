"""Command-line entry point: config loading, seeded runs, CSV and plot-data output.

Usage::

    dace-lab <toy-sweep|seq-train|seq-ablate-beta|seq-eval> --config PATH \\
        [--set key=value]... [--jobs N] [--out DIR]
    dace-lab rerun RUN_DIR/manifest.txt [--out DIR] [--jobs N]
    dace-lab plot RUN_DIR

Every run directory gets a ``manifest.txt`` (flat ``key=value``) holding the
fully resolved config as JSON, its hash, the seeds and the code version, so
``rerun`` can reproduce the run byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli

from . import __version__
from .dace import DaceConfig
from .gaussian_toy import (
    SWEEP_HEADER,
    TRACE_HEADER,
    RewardLandscapeConfig,
    ToyTrainConfig,
    fixed_strategy_sweep,
    summarize_sweep,
    trace_rows,
)
from .grpo import (
    GrpoConfig,
    TrainingDivergenceError,
    pass_at_k_curve,
    sample_correctness,
    train,
)
from .seq_env import dump_tasks, generate_tasks
from .seq_policy import TabularPolicy, init_prior

KINDS = ("toy-sweep", "seq-train", "seq-ablate-beta", "seq-eval")
SEED_ENV = "DACE_LAB_SEED"
MANIFEST = "manifest.txt"
PLOT_FILE = "plot_data.csv"
PLOT_HEADER = ("figure", "series", "x", "y")
DYNAMICS_SERIES = ("mean_raw_certainty", "mean_step_entropy", "mean_response_length")
ABLATION_SERIES = ("mean_step_entropy", "mean_response_length", "mean_raw_certainty")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_PLOT = 4


class ConfigError(ValueError):
    pass


class PlotInputError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SweepGrid:
    alphas: tuple[float, ...] = (-0.1, -0.05, 0.0, 0.05)
    widths: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class TaskSetConfig:
    num_tasks: int = 24
    tier_mix: Mapping[int, float] = field(default_factory=lambda: {1: 1.0})
    seed: int = 0


@dataclass(frozen=True)
class PolicyInitConfig:
    temperature: float = 0.6
    init_logit_scale: float = 0.0
    init_answer_bonus: float = 0.0


@dataclass(frozen=True)
class EvalConfig:
    samples_per_task: int = 32
    ks: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    checkpoint: str = ""


@dataclass(frozen=True)
class AblationConfig:
    betas: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    warmup: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seeds: tuple[int, ...] = (0,)
    master_seed: int = 0
    out_dir: str = "runs"
    landscape: RewardLandscapeConfig = RewardLandscapeConfig()
    toy: ToyTrainConfig = ToyTrainConfig()
    sweep: SweepGrid = SweepGrid()
    tasks: TaskSetConfig = TaskSetConfig()
    policy: PolicyInitConfig = PolicyInitConfig()
    grpo: GrpoConfig = GrpoConfig()
    dace: DaceConfig | None = DaceConfig()
    eval: EvalConfig = EvalConfig()
    ablation: AblationConfig = AblationConfig()


SECTIONS = {
    "landscape": RewardLandscapeConfig,
    "toy": ToyTrainConfig,
    "sweep": SweepGrid,
    "tasks": TaskSetConfig,
    "policy": PolicyInitConfig,
    "grpo": GrpoConfig,
    "dace": DaceConfig,
    "eval": EvalConfig,
    "ablation": AblationConfig,
}
TOP_LEVEL = {"kind", "seeds", "master_seed", "out_dir", "dace_enabled"}
# per-run values the harness sets itself
RESERVED = {"toy": {"alpha", "seed"}}


def _coerce(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where}: expected a nonempty list, got {value!r}")
        return tuple(_coerce(v, default[0], where) for v in value)
    if isinstance(default, Mapping):
        if not isinstance(value, Mapping) or not value:
            raise ConfigError(f"{where}: expected a nonempty table, got {value!r}")
        try:
            return {int(k): float(v) for k, v in value.items()}
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected integer keys and numeric values") from None
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _build_section(name: str, cls, table: Any):
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)} - RESERVED.get(name, set())
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    kwargs = {k: _coerce(v, getattr(defaults, k), f"{name}.{k}") for k, v in table.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def build_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a parsed config document; unknown keys anywhere are an error."""
    unknown = sorted(set(raw) - TOP_LEVEL - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
    base = ExperimentConfig(kind=kind)
    kwargs: dict[str, Any] = {"kind": kind}
    for key in ("seeds", "master_seed", "out_dir"):
        if key in raw:
            kwargs[key] = _coerce(raw[key], getattr(base, key), key)
    for name, cls in SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(name, cls, raw[name])
    dace_enabled = _coerce(raw.get("dace_enabled", True), True, "dace_enabled")
    if not dace_enabled:
        if "dace" in raw:
            raise ConfigError("dace_enabled = false conflicts with a [dace] table")
        kwargs["dace"] = None
    if len(set(kwargs.get("seeds", base.seeds))) != len(kwargs.get("seeds", base.seeds)):
        raise ConfigError("seeds must be distinct")
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Canonical JSON-ready form (inverse of :func:`build_config`)."""
    out: dict[str, Any] = {"kind": cfg.kind, "seeds": list(cfg.seeds), "master_seed": cfg.master_seed,
                           "out_dir": cfg.out_dir, "dace_enabled": cfg.dace is not None}
    for name in SECTIONS:
        section = getattr(cfg, name)
        if section is None:
            continue
        table = {}
        for f in dataclasses.fields(section):
            if f.name in RESERVED.get(name, set()):
                continue
            v = getattr(section, f.name)
            if isinstance(v, tuple):
                v = list(v)
            elif isinstance(v, Mapping):
                v = {str(k): v[k] for k in sorted(v)}
            table[f.name] = v
        out[name] = table
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _parse_override_value(text: str) -> Any:
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``dotted.key=value`` overrides; values use TOML literal syntax."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, text = item.split("=", 1)
        keys = path.strip().split(".")
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {k!r} is not a table")
        node[keys[-1]] = _parse_override_value(text.strip())
    return raw


def load_config(path: str | os.PathLike, overrides: list[str] = (), env: Mapping[str, str] | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    raw = apply_overrides(raw, list(overrides))
    if env.get(SEED_ENV):
        try:
            raw["master_seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    return build_config(raw)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Independent 63-bit stream seed for ``(master_seed, *keys)``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# artifact helpers


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(run_dir: Path, cfg: ExperimentConfig, extra: Mapping[str, str] = {}) -> None:
    lines = {
        "kind": cfg.kind,
        "code_version": __version__,
        "config_hash": config_hash(cfg),
        "master_seed": str(cfg.master_seed),
        "seeds": ",".join(str(s) for s in cfg.seeds),
        **extra,
        "config_json": json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":")),
    }
    (run_dir / MANIFEST).write_text("".join(f"{k}={v}\n" for k, v in lines.items()))


def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    if not p.is_file():
        raise PlotInputError(f"missing manifest: {p}")
    out = {}
    for line in p.read_text().splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k] = v
    return out


def config_from_manifest(path: str | os.PathLike) -> ExperimentConfig:
    m = read_manifest(path)
    try:
        cfg = build_config(json.loads(m["config_json"]))
    except (KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"manifest has no usable config_json: {exc}") from None
    if config_hash(cfg) != m.get("config_hash"):
        raise ConfigError("manifest config_hash does not match its config_json")
    return cfg


# ---------------------------------------------------------------------------
# experiment runners


def _toy_sweep(cfg: ExperimentConfig, run_dir: Path, jobs: int) -> None:
    seeds = [derive_seed(cfg.master_seed, s) for s in cfg.seeds]
    rows, traces = fixed_strategy_sweep(cfg.sweep.alphas, cfg.sweep.widths, seeds, cfg.toy, cfg.landscape, jobs)
    label = dict(zip(seeds, cfg.seeds))
    _write_csv(run_dir / "sweep.csv", SWEEP_HEADER,
               [r.csv_fields()[:2] + [str(label[r.seed])] + r.csv_fields()[3:] for r in rows])
    _write_csv(
        run_dir / "summary.csv",
        ("alpha", "sigma_r1", "n_ok", "n_failed", "mean_final_expected_reward", "std_final_expected_reward", "status"),
        [[repr(s.alpha), repr(s.sigma_r1), s.n_ok, s.n_failed, repr(s.mean), repr(s.std), s.status]
         for s in summarize_sweep(rows)],
    )
    trace_lines = []
    for r, t in zip(rows, traces):
        if t is not None:
            trace_lines += trace_rows(r.alpha, r.sigma_r1, label[r.seed], t)
    _write_csv(run_dir / "traces.csv", TRACE_HEADER, trace_lines)
    failures = [f"alpha={r.alpha!r} sigma_r1={r.sigma_r1!r} seed={label[r.seed]}: {r.error}\n"
                for r in rows if r.failed]
    (run_dir / "failures.txt").write_text("".join(failures))


def build_tasks(cfg: ExperimentConfig):
    return generate_tasks(cfg.tasks.num_tasks, cfg.tasks.tier_mix, cfg.tasks.seed)


def build_policy(cfg: ExperimentConfig, tasks, run_seed: int) -> TabularPolicy:
    p = cfg.policy
    return init_prior(TabularPolicy(p.temperature), tasks, p.init_logit_scale, p.init_answer_bonus,
                      derive_seed(run_seed, 1), cfg.grpo.max_len)


def _seq_run(job) -> dict[str, Any]:
    """One isolated training run; writes its own metrics/checkpoint files."""
    cfg, dace_cfg, seed_label, run_seed, stem, run_dir = job
    tasks = build_tasks(cfg)
    policy = build_policy(cfg, tasks, run_seed)
    try:
        policy, history = train(policy, tasks, cfg.grpo, dace_cfg, derive_seed(run_seed, 2),
                                metrics_path=run_dir / f"{stem}.csv")
    except TrainingDivergenceError as exc:
        return {"stem": stem, "error": str(exc)}
    (run_dir / f"{stem}.policy.tsv").write_text(policy.dumps())
    correct = sample_correctness(policy, tasks, max(cfg.eval.ks + (cfg.eval.samples_per_task,)),
                                 np.random.default_rng(derive_seed(run_seed, 3)), cfg.grpo.max_len)
    k = cfg.eval.samples_per_task
    return {
        "stem": stem,
        "seed": seed_label,
        "history": history,
        "mean_at_k": float(np.mean(correct[:, :k])),
        "pass_at_k": float(np.mean(np.any(correct[:, :k], axis=1))),
        "curve": pass_at_k_curve(correct, cfg.eval.ks),
    }


def _run_jobs(jobs_list, jobs: int):
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_seq_run, jobs_list))
    return [_seq_run(j) for j in jobs_list]


def _raise_failures(results) -> None:
    bad = [r for r in results if "error" in r]
    if bad:
        raise TrainingDivergenceError("; ".join(f"{r['stem']}: {r['error']}" for r in bad))


def _seq_train(cfg: ExperimentConfig, run_dir: Path, jobs: int) -> None:
    tasks = build_tasks(cfg)
    (run_dir / "tasks.tsv").write_text(dump_tasks(tasks))
    job_list = [(cfg, cfg.dace, s, derive_seed(cfg.master_seed, s), f"metrics_seed{s}", run_dir) for s in cfg.seeds]
    results = _run_jobs(job_list, jobs)
    _raise_failures(results)
    k = cfg.eval.samples_per_task
    _write_csv(
        run_dir / "eval.csv",
        ("seed", "final_shortcut_rate", "converged_shortcut_rate", "final_external_reward",
         f"mean_at_{k}", f"pass_at_{k}"),
        [[r["seed"], repr(r["history"][-1].shortcut_rate), repr(converged_mean(r["history"], "shortcut_rate")),
          repr(r["history"][-1].mean_external_reward), repr(r["mean_at_k"]), repr(r["pass_at_k"])]
         for r in results],
    )
    _write_csv(run_dir / "pass_at_k.csv", ("seed", "k", "pass_at_k"),
               [[r["seed"], kk, repr(v)] for r in results for kk, v in zip(cfg.eval.ks, r["curve"])])


def converged_mean(history, metric: str) -> float:
    """Mean of ``metric`` over the final tenth of training (at least one step)."""
    tail = history[-max(1, len(history) // 10):]
    return float(np.mean([getattr(h, metric) for h in tail]))


def ablation_summary(history, warmup: int) -> dict[str, float]:
    tail = history[warmup:] or history
    return {m: float(np.mean([getattr(h, m) for h in tail])) for m in ABLATION_SERIES + ("mean_external_reward",)}


def _seq_ablate_beta(cfg: ExperimentConfig, run_dir: Path, jobs: int) -> None:
    base = cfg.dace if cfg.dace is not None else DaceConfig()
    tasks = build_tasks(cfg)
    (run_dir / "tasks.tsv").write_text(dump_tasks(tasks))
    job_list = []
    for beta in cfg.ablation.betas:
        dcfg = dataclasses.replace(base, beta_threshold=beta)
        for s in cfg.seeds:
            # the same seed label gives the same stream for every beta (matched seeds)
            job_list.append((cfg, dcfg, s, derive_seed(cfg.master_seed, s), f"metrics_beta{beta!r}_seed{s}", run_dir))
    results = _run_jobs(job_list, jobs)
    _raise_failures(results)
    rows = []
    i = 0
    for beta in cfg.ablation.betas:
        for _s in cfg.seeds:
            summ = ablation_summary(results[i]["history"], cfg.ablation.warmup)
            rows.append([repr(beta), results[i]["seed"]] + [repr(summ[m]) for m in summ])
            i += 1
    _write_csv(run_dir / "ablation.csv",
               ("beta", "seed") + tuple(f"avg_{m}" for m in ABLATION_SERIES + ("mean_external_reward",)), rows)


def _seq_eval(cfg: ExperimentConfig, run_dir: Path, jobs: int) -> None:
    tasks = build_tasks(cfg)
    if cfg.eval.checkpoint:
        ckpt = Path(cfg.eval.checkpoint)
        if not ckpt.is_file():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        policy = TabularPolicy.loads(ckpt.read_text())
    else:
        policy = build_policy(cfg, tasks, derive_seed(cfg.master_seed, cfg.seeds[0]))
    rows, curve_rows = [], []
    for s in cfg.seeds:
        n = max(cfg.eval.ks + (cfg.eval.samples_per_task,))
        correct = sample_correctness(policy, tasks, n, np.random.default_rng(derive_seed(cfg.master_seed, s, 3)),
                                     cfg.grpo.max_len)
        k = cfg.eval.samples_per_task
        rows.append([s, repr(float(np.mean(correct[:, :k]))), repr(float(np.mean(np.any(correct[:, :k], axis=1))))])
        curve_rows += [[s, kk, repr(v)] for kk, v in zip(cfg.eval.ks, pass_at_k_curve(correct, cfg.eval.ks))]
    _write_csv(run_dir / "eval.csv", ("seed", f"mean_at_{cfg.eval.samples_per_task}",
                                      f"pass_at_{cfg.eval.samples_per_task}"), rows)
    _write_csv(run_dir / "pass_at_k.csv", ("seed", "k", "pass_at_k"), curve_rows)


RUNNERS = {
    "toy-sweep": _toy_sweep,
    "seq-train": _seq_train,
    "seq-ablate-beta": _seq_ablate_beta,
    "seq-eval": _seq_eval,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, jobs: int = 1) -> Path:
    """Run ``cfg`` into ``out_dir`` (default ``cfg.out_dir``) and emit plot data."""
    run_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(run_dir, cfg)
    RUNNERS[cfg.kind](cfg, run_dir, max(1, int(jobs)))
    emit_plot_data(run_dir)
    return run_dir


# ---------------------------------------------------------------------------
# plot data


def _require(run_dir: Path, names) -> None:
    missing = [n for n in names if not (run_dir / n).is_file()]
    if missing:
        raise PlotInputError(f"{run_dir}: missing input(s): {', '.join(missing)}")


def _mean_by_step(paths, metric: str) -> list[tuple[int, float]]:
    series = []
    for p in paths:
        rows = _read_csv(p)
        if not rows or metric not in rows[0]:
            raise PlotInputError(f"{p}: metrics file is empty or lacks column {metric!r}")
        series.append([float(r[metric]) for r in rows])
    n = min(len(s) for s in series)
    return [(i, float(np.mean([s[i] for s in series]))) for i in range(n)]


def emit_plot_data(run_dir: str | os.PathLike) -> Path:
    """Write ``plot_data.csv`` (``figure,series,x,y``) for a finished run."""
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    try:
        cfg = build_config(json.loads(manifest["config_json"]))
    except (KeyError, json.JSONDecodeError, ConfigError) as exc:
        raise PlotInputError(f"{run_dir}: unusable manifest ({exc})") from None
    out: list[list[str]] = []

    if cfg.kind == "toy-sweep":
        _require(run_dir, ["traces.csv", "sweep.csv"])
        by_series: dict[tuple[str, str], dict[int, list[float]]] = {}
        for r in _read_csv(run_dir / "traces.csv"):
            key = (r["alpha"], r["sigma_r1"])
            by_series.setdefault(key, {}).setdefault(int(r["iteration"]), []).append(float(r["expected_reward"]))
        for (alpha, width), pts in by_series.items():
            for x in sorted(pts):
                out.append(["toy", f"alpha={alpha};sigma_r1={width}", str(x), repr(float(np.mean(pts[x])))])
    elif cfg.kind == "seq-train":
        names = [f"metrics_seed{s}.csv" for s in cfg.seeds]
        _require(run_dir, names)
        for metric in DYNAMICS_SERIES:
            for x, y in _mean_by_step([run_dir / n for n in names], metric):
                out.append(["dynamics", metric, str(x), repr(y)])
    elif cfg.kind == "seq-ablate-beta":
        names = {b: [f"metrics_beta{b!r}_seed{s}.csv" for s in cfg.seeds] for b in cfg.ablation.betas}
        _require(run_dir, [n for v in names.values() for n in v])
        for metric in ABLATION_SERIES:
            for beta, files in names.items():
                for x, y in _mean_by_step([run_dir / n for n in files], metric):
                    out.append(["beta_ablation", f"{metric};beta={beta!r}", str(x), repr(y)])
    else:
        _require(run_dir, ["pass_at_k.csv"])
        by_k: dict[int, list[float]] = {}
        for r in _read_csv(run_dir / "pass_at_k.csv"):
            by_k.setdefault(int(r["k"]), []).append(float(r["pass_at_k"]))
        for k in sorted(by_k):
            out.append(["pass_at_k", "pass_at_k", str(k), repr(float(np.mean(by_k[k])))])

    path = run_dir / PLOT_FILE
    _write_csv(path, PLOT_HEADER, out)
    return path


# ---------------------------------------------------------------------------
# CLI


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dace-lab", description="Difficulty-aware certainty shaping lab.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment")
        s.add_argument("--config", required=True, help="TOML experiment config")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value by dotted path (repeatable)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
        s.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    r = sub.add_parser("rerun", help="re-run an experiment from its manifest")
    r.add_argument("manifest", help="manifest.txt or the run directory holding it")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", default=None)
    pl = sub.add_parser("plot", help="(re)write plot_data.csv for a run directory")
    pl.add_argument("run_dir")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "plot":
            print(emit_plot_data(args.run_dir))
            return EXIT_OK
        if args.command == "rerun":
            cfg = config_from_manifest(args.manifest)
        else:
            cfg = load_config(args.config, args.overrides)
            if cfg.kind != args.command:
                raise ConfigError(f"config kind {cfg.kind!r} does not match command {args.command!r}")
        run_dir = run_experiment(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"dace-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlotInputError as exc:
        print(f"dace-lab: plot input error: {exc}", file=sys.stderr)
        return EXIT_PLOT
    except (TrainingDivergenceError, ValueError, OSError) as exc:
        print(f"dace-lab: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(run_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
