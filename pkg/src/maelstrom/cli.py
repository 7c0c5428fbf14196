"""Reproducible experiment runner.

Subcommands: ``run`` (train/evaluate one mode over seeds), ``generate``
(write a task stream to disk), ``analyze`` (memory capacity or regime
sweep), ``compare`` (full vs esn-ablation vs memoryless on shared
streams). Configs are strict YAML: unknown keys are errors, so a config
file plus a seed list pins an experiment exactly. Outputs are
line-delimited JSON records (sorted keys) plus a CSV table, written
sorted by (mode, seed) so reruns are byte-identical; timing goes to the
console, never into files.

Exit codes: 0 ok, 2 config error, 3 diverged run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .analyze import memory_capacity, regime_sweep
from .assembly import AssemblySpec, build_assembly
from .core import MaelstromConfig, build
from .digest import config_digest
from .errors import ConfigError, DivergedError, MaelstromError
from .numerics import derive_seed
from .tasks import TaskStream, generate, write_stream_jsonl
from .training import OnlineTrainer, TrainerConfig, RunSummary, run_online

_MODES = ("full", "esn-ablation", "memoryless")

_TASK_INFO = {
    # task id -> (kind, n_classes, extra allowed keys)
    "narma10": ("regression", None, set()),
    "delayed-recall": ("classification", 2, {"delay"}),
    "temporal-parity": ("classification", 2, {"window"}),
    "mackey-glass": ("regression", None, {"tau"}),
}

# Per-seed sub-seed slots (see numerics.derive_seed).
_SLOT_TASK = 0
_SLOT_CORE = 1
_SLOT_ASSEMBLY = 2


def _check_keys(block: dict, allowed: set, context: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{context}.{key}'")


def _require(block: dict, key: str, context: str):
    if key not in block or block[key] is None:
        raise ConfigError(f"missing required field '{context}.{key}'")
    return block[key]


def set_override(config: dict, dotted: str, raw_value: str) -> None:
    """Apply --override task.length=500 style assignments onto the raw
    config dict; values are parsed as YAML scalars."""
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path '{dotted}' crosses a non-mapping value")
    node[parts[-1]] = yaml.safe_load(raw_value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated run/compare configuration (seed-independent)."""

    task: dict
    maelstrom: dict
    assembly: dict
    trainer: TrainerConfig
    seeds: tuple[int, ...]
    mode: str
    output: str
    ridge_lambda: float

    def digest_payload(self) -> dict:
        return {
            "task": self.task,
            "maelstrom": self.maelstrom,
            "assembly": self.assembly,
            "trainer": self.trainer.to_dict(),
            "mode": self.mode,
            "ridge_lambda": self.ridge_lambda,
        }


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, {"task", "maelstrom", "assembly", "trainer", "seeds", "mode",
                      "output", "ridge_lambda"}, "config")

    task = dict(_require(raw, "task", "config"))
    task_id = str(_require(task, "id", "task"))
    if task_id not in _TASK_INFO:
        raise ConfigError(f"unknown task id '{task_id}'; known: {sorted(_TASK_INFO)}")
    _, _, extra = _TASK_INFO[task_id]
    _check_keys(task, {"id", "length", "train_frac"} | extra, "task")
    _require(task, "length", "task")

    maelstrom = dict(raw.get("maelstrom") or {})
    _check_keys(maelstrom, {"units", "spectral_radius", "leak_rate", "recurrent_density",
                            "feedback_dim", "weight_range"}, "maelstrom")

    assembly = dict(raw.get("assembly") or {})
    _check_keys(assembly, {"input_layers", "interface_in_dim", "skip_enabled",
                           "combine_dim", "output_layers"}, "assembly")

    trainer_block = dict(raw.get("trainer") or {})
    _check_keys(trainer_block, {"optimizer", "learning_rate", "momentum", "beta1",
                                "beta2", "eps", "update_every", "washout",
                                "gradient_clip"}, "trainer")
    trainer = TrainerConfig(**trainer_block)

    seeds = _require(raw, "seeds", "config")
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("'config.seeds' must be a non-empty list of integers")
    seeds = tuple(int(s) for s in seeds)

    mode = str(raw.get("mode", "full"))
    if mode not in _MODES:
        raise ConfigError(f"unknown mode '{mode}'; known: {_MODES}")

    ridge_lambda = float(raw.get("ridge_lambda", 1e-6))
    output = str(raw.get("output", "results/run"))
    return ExperimentConfig(
        task=task, maelstrom=maelstrom, assembly=assembly, trainer=trainer,
        seeds=seeds, mode=mode, output=output, ridge_lambda=ridge_lambda,
    )


def load_config_file(path: str, overrides: list[str]) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' must look like key.path=value")
        dotted, _, value = item.partition("=")
        set_override(raw, dotted.strip(), value)
    return raw


def make_stream(config: ExperimentConfig, run_seed: int) -> TaskStream:
    params = {k: v for k, v in config.task.items() if k != "id"}
    return generate(config.task["id"], seed=derive_seed(run_seed, _SLOT_TASK), **params)


def make_spec(config: ExperimentConfig, run_seed: int, mode: str) -> AssemblySpec:
    kind, n_classes, _ = _TASK_INFO[config.task["id"]]
    output_dim = n_classes if kind == "classification" else 1
    assembly = dict(config.assembly)
    if mode == "esn-ablation":
        assembly["skip_enabled"] = False
    interface_in_dim = int(assembly.get("interface_in_dim", 8))
    m_kwargs = dict(config.maelstrom)
    if "weight_range" in m_kwargs:
        m_kwargs["weight_range"] = tuple(m_kwargs["weight_range"])
    m_cfg = MaelstromConfig(
        input_dim=interface_in_dim, seed=derive_seed(run_seed, _SLOT_CORE), **m_kwargs
    )
    spec_kwargs = {}
    if "input_layers" in assembly:
        spec_kwargs["input_layers"] = tuple(tuple(e) for e in assembly["input_layers"])
    if "output_layers" in assembly:
        spec_kwargs["output_layers"] = tuple(tuple(e) for e in assembly["output_layers"])
    if "skip_enabled" in assembly:
        spec_kwargs["skip_enabled"] = bool(assembly["skip_enabled"])
    if "combine_dim" in assembly:
        spec_kwargs["combine_dim"] = int(assembly["combine_dim"])
    return AssemblySpec(
        stimulus_dim=1,
        output_dim=output_dim,
        maelstrom=m_cfg,
        interface_in_dim=interface_in_dim,
        head_kind=kind,
        seed=derive_seed(run_seed, _SLOT_ASSEMBLY),
        **spec_kwargs,
    )


def run_one(config: ExperimentConfig, run_seed: int, mode: str,
            stream: TaskStream | None = None):
    """Build and run a single (seed, mode) job; returns (summary, records)."""
    if stream is None:
        stream = make_stream(config, run_seed)
    spec = make_spec(config, run_seed, mode)
    asm = build_assembly(spec)
    if mode == "esn-ablation":
        asm.freeze_trunk()
    trainer = OnlineTrainer(config.trainer)
    forward_mode = "memoryless" if mode == "memoryless" else "full"
    records, summary = run_online(trainer, asm, stream, mode=forward_mode)
    digest = config_digest(config.digest_payload())
    summary = dataclasses.replace(summary, mode=mode, seed=run_seed, config_digest=digest)
    return summary, records


# ---------------------------------------------------------------------------
# Output sinks
# ---------------------------------------------------------------------------

def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fieldnames})


_SUMMARY_FIELDS = ["task", "mode", "seed", "steps", "metric_name",
                   "train_metric", "eval_metric", "config_digest"]


def _emit_summaries(out_prefix: str, summaries: list[RunSummary],
                    extra_cols: dict[tuple[str, int], dict] | None = None) -> None:
    rows = []
    for s in sorted(summaries, key=lambda s: (s.mode, s.seed)):
        row = s.to_dict()
        if extra_cols:
            row.update(extra_cols.get((s.mode, s.seed), {}))
        rows.append(row)
    fields = list(_SUMMARY_FIELDS)
    if extra_cols:
        for extras in extra_cols.values():
            for k in extras:
                if k not in fields:
                    fields.append(k)
    prefix = Path(out_prefix)
    _write_jsonl(prefix.with_suffix(".jsonl"), rows)
    _write_csv(prefix.with_suffix(".csv"), rows, fields)


def _emit_trace(out_prefix: str, traces: dict[tuple[str, int], list], digest: str) -> None:
    rows = []
    for (mode, seed) in sorted(traces):
        for rec in traces[(mode, seed)]:
            rows.append({
                "mode": mode,
                "seed": seed,
                "t": rec.t,
                "phase": rec.phase,
                "loss": rec.loss,
                "prediction": [float(v) for v in np.atleast_1d(rec.prediction)],
                "target": (int(rec.target) if isinstance(rec.target, (int, np.integer))
                           else [float(v) for v in np.atleast_1d(rec.target)]),
                "config_digest": digest,
            })
    _write_jsonl(Path(out_prefix + ".trace.jsonl"), rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    raw = load_config_file(args.config, args.override)
    config = parse_experiment_config(raw)
    seeds = tuple(args.seed) if args.seed else config.seeds
    out = args.out or config.output
    summaries, traces = [], {}
    started = time.perf_counter()
    for seed in seeds:
        summary, records = run_one(config, seed, config.mode)
        summaries.append(summary)
        if args.trace:
            traces[(config.mode, seed)] = records
        if not args.quiet:
            print(f"[run] task={summary.task} mode={summary.mode} seed={seed} "
                  f"{summary.metric_name}={_fmt(summary.eval_metric)}")
    _emit_summaries(out, summaries)
    if args.trace:
        _emit_trace(out, traces, config_digest(config.digest_payload()))
    if not args.quiet:
        elapsed = time.perf_counter() - started
        print(f"[run] wrote {out}.jsonl and {out}.csv ({elapsed:.1f}s)", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    raw = load_config_file(args.config, args.override)
    config = parse_experiment_config(raw)
    seeds = tuple(args.seed) if args.seed else config.seeds
    out = args.out or config.output
    summaries = []
    full_metric: dict[int, float | None] = {}
    for seed in seeds:
        stream = make_stream(config, seed)
        for mode in _MODES:
            summary, _ = run_one(config, seed, mode, stream=stream)
            summaries.append(summary)
            if mode == "full":
                full_metric[seed] = summary.eval_metric
            if not args.quiet:
                print(f"[compare] seed={seed} mode={mode} "
                      f"{summary.metric_name}={_fmt(summary.eval_metric)}")
    deltas = {}
    for s in summaries:
        base = full_metric.get(s.seed)
        delta = None
        if base is not None and s.eval_metric is not None:
            delta = s.eval_metric - base
        deltas[(s.mode, s.seed)] = {"delta_vs_full": delta}
    _emit_summaries(out, summaries, extra_cols=deltas)
    if not args.quiet:
        print(f"[compare] wrote {out}.jsonl and {out}.csv", file=sys.stderr)
    return 0


def cmd_generate(args) -> int:
    params = {"length": args.length}
    if args.delay is not None:
        params["delay"] = args.delay
    if args.window is not None:
        params["window"] = args.window
    if args.tau is not None:
        params["tau"] = args.tau
    if args.train_frac is not None:
        params["train_frac"] = args.train_frac
    stream = generate(args.task, seed=args.seed, **params)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_stream_jsonl(stream, args.out)
    if not args.quiet:
        print(f"[generate] {args.task} length={len(stream)} -> {args.out}")
    return 0


def cmd_analyze(args) -> int:
    raw = load_config_file(args.config, args.override)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, {"maelstrom", "memory_capacity", "regime_sweep", "output"}, "config")
    m_kwargs = dict(raw.get("maelstrom") or {})
    _check_keys(m_kwargs, {"units", "spectral_radius", "leak_rate", "recurrent_density",
                           "feedback_dim", "weight_range"}, "maelstrom")
    if "weight_range" in m_kwargs:
        m_kwargs["weight_range"] = tuple(m_kwargs["weight_range"])
    out = args.out or str(raw.get("output", "results/analysis"))

    if args.kind == "memory-capacity":
        block = dict(raw.get("memory_capacity") or {})
        _check_keys(block, {"seq_len", "d_max", "lambda", "seeds", "washout"}, "memory_capacity")
        seeds = block.get("seeds", [0])
        rows = []
        for seed in seeds:
            core = build(MaelstromConfig(input_dim=1, seed=int(seed), **m_kwargs))
            report = memory_capacity(
                core,
                seq_len=int(block.get("seq_len", 2200)),
                d_max=block.get("d_max"),
                lam=float(block.get("lambda", 1e-6)),
                probe_seed=int(seed),
                washout=int(block.get("washout", 100)),
            )
            rows.append({
                "seed": int(seed),
                "n_units": report.n_units,
                "d_max": report.d_max,
                "total_mc": report.total,
                "r_squared": [float(v) for v in report.r_squared],
                "config_digest": report.config_digest,
            })
            if not args.quiet:
                print(f"[analyze] memory-capacity seed={seed} MC={report.total:.3f}")
        rows.sort(key=lambda r: r["seed"])
        prefix = Path(out)
        _write_jsonl(prefix.with_suffix(".jsonl"), rows)
        _write_csv(prefix.with_suffix(".csv"), [
            {k: r[k] for k in ("seed", "n_units", "d_max", "total_mc", "config_digest")}
            for r in rows
        ], ["seed", "n_units", "d_max", "total_mc", "config_digest"])
        return 0

    # regime sweep
    block = dict(raw.get("regime_sweep") or {})
    _check_keys(block, {"rho_values", "seeds", "dr_steps", "perturbation",
                        "mc_seq_len", "mc_lambda"}, "regime_sweep")
    rho_values = _require(block, "rho_values", "regime_sweep")
    seeds = block.get("seeds", [0])
    template = MaelstromConfig(input_dim=1, **m_kwargs)
    rows = regime_sweep(
        template,
        rho_values,
        seeds,
        dr_steps=int(block.get("dr_steps", 400)),
        perturbation=float(block.get("perturbation", 1e-8)),
        mc_seq_len=int(block.get("mc_seq_len", 2200)),
        mc_lambda=float(block.get("mc_lambda", 1e-6)),
    )
    digest = config_digest({"maelstrom": m_kwargs, "regime_sweep": block})
    dict_rows = [dict(r.to_dict(), config_digest=digest) for r in rows]
    dict_rows.sort(key=lambda r: (r["spectral_radius"], r["seed"]))
    if not args.quiet:
        for r in dict_rows:
            print(f"[analyze] rho={r['spectral_radius']} seed={r['seed']} "
                  f"rate={r['divergence_rate']:.4f} MC={r['memory_capacity']:.3f}")
    prefix = Path(out)
    _write_jsonl(prefix.with_suffix(".jsonl"), dict_rows)
    _write_csv(prefix.with_suffix(".csv"), dict_rows,
               ["spectral_radius", "seed", "divergence_rate", "memory_capacity",
                "recurrent_spectral_norm", "config_digest"])
    return 0


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maelstrom",
        description="Frozen-core recurrent networks: experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", help="train and evaluate one mode over seeds")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", action="append", type=int, help="repeatable; overrides config seeds")
    p_run.add_argument("--out", help="output path prefix (overrides config)")
    p_run.add_argument("--trace", action="store_true", help="also write per-step records")
    p_run.add_argument("--override", action="append", default=[],
                       help="key.path=value config override, repeatable")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="full vs esn-ablation vs memoryless on shared streams")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--seed", action="append", type=int)
    p_cmp.add_argument("--out")
    p_cmp.add_argument("--override", action="append", default=[])
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_gen = sub.add_parser("generate", help="write a task stream as line-delimited JSON")
    p_gen.add_argument("--task", required=True)
    p_gen.add_argument("--length", required=True, type=int)
    p_gen.add_argument("--seed", required=True, type=int)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--delay", type=int)
    p_gen.add_argument("--window", type=int)
    p_gen.add_argument("--tau", type=float)
    p_gen.add_argument("--train-frac", type=float, dest="train_frac")
    add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_an = sub.add_parser("analyze", help="memory capacity or regime sweep")
    p_an.add_argument("--kind", required=True, choices=["memory-capacity", "regime-sweep"])
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--out")
    p_an.add_argument("--override", action="append", default=[])
    add_common(p_an)
    p_an.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    except MaelstromError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
