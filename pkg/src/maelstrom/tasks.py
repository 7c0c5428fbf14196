"""Seeded generators for temporal benchmarks that require sequence memory.

Every stream is a pure function of (task parameters, seed): regenerating
with the same arguments is bit-identical. Streams are never shuffled and
splits are contiguous in time — the whole point of these tasks is the
temporal structure, so train always precedes eval on the same thread.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numerics import stream_rng

DEFAULT_TRAIN_FRAC = 5.0 / 6.0  # 12000-step default -> 10000 train / 2000 eval

_NARMA_DIVERGE_LIMIT = 10.0
_MAX_REDRAWS = 10


@dataclass(frozen=True)
class TaskStream:
    """A finite sequence of (stimulus, target, phase) records.

    ``targets`` is (T, target_dim) float64 for regression or (T,) int64
    class indices for classification. ``ignore`` marks records excluded
    from losses and metrics (e.g. before a recall delay has elapsed).
    Phases are contiguous: records [0, n_train) are train, the rest eval.
    """

    task: str
    kind: str  # "regression" | "classification"
    stimuli: np.ndarray
    targets: np.ndarray
    n_train: int
    ignore: np.ndarray
    n_classes: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.stimuli.ndim != 2:
            raise ConfigError("stimuli must be (T, stimulus_dim)")
        t = self.stimuli.shape[0]
        if self.targets.shape[0] != t or self.ignore.shape != (t,):
            raise ConfigError("stimuli, targets and ignore lengths differ")
        if not (0 <= self.n_train <= t):
            raise ConfigError(f"n_train {self.n_train} outside [0, {t}]")
        if not np.all(np.isfinite(self.stimuli)):
            raise ConfigError("stimuli contain non-finite values")
        if self.kind == "regression" and not np.all(np.isfinite(self.targets)):
            raise ConfigError("targets contain non-finite values")

    def __len__(self) -> int:
        return self.stimuli.shape[0]

    @property
    def stimulus_dim(self) -> int:
        return self.stimuli.shape[1]

    @property
    def target_dim(self) -> int:
        return 1 if self.kind == "classification" else self.targets.shape[1]

    def phases(self) -> np.ndarray:
        out = np.full(len(self), "eval", dtype="<U5")
        out[: self.n_train] = "train"
        return out


def split(stream: TaskStream, train_frac: float) -> TaskStream:
    """Retag a contiguous prefix as train, the suffix as eval.

    No shuffling, no reordering; record count is conserved and
    re-splitting with the same fraction is idempotent.
    """
    if not (0.0 < train_frac < 1.0):
        raise ConfigError(f"train_frac must be in (0, 1), got {train_frac}")
    return dataclasses.replace(stream, n_train=int(len(stream) * train_frac))


def truncate(stream: TaskStream, length: int) -> TaskStream:
    """First ``length`` records, phases preserved."""
    if not (0 < length <= len(stream)):
        raise ConfigError(f"length {length} outside (0, {len(stream)}]")
    return dataclasses.replace(
        stream,
        stimuli=stream.stimuli[:length],
        targets=stream.targets[:length],
        ignore=stream.ignore[:length],
        n_train=min(stream.n_train, length),
    )


# ---------------------------------------------------------------------------
# NARMA-10
# ---------------------------------------------------------------------------

def narma10_targets(u: np.ndarray) -> np.ndarray:
    """Run the order-10 NARMA recurrence over an input sequence.

    y(t+1) = 0.3 y(t) + 0.05 y(t) * sum_{i=0..9} y(t-i)
             + 1.5 u(t-9) u(t) + 0.1
    with zero history (y and u are 0 for t < 0). Returns y(1..T) aligned
    so that entry t is the target for stimulus u(t). Raises ConfigError
    if the recurrence leaves |y| <= 10 (divergent draw).
    """
    u = np.asarray(u, dtype=float)
    t_len = u.shape[0]
    y = np.zeros(t_len + 1)
    for t in range(t_len):
        window = y[max(0, t - 9) : t + 1].sum()
        u_past = u[t - 9] if t >= 9 else 0.0
        y[t + 1] = 0.3 * y[t] + 0.05 * y[t] * window + 1.5 * u_past * u[t] + 0.1
        if not np.isfinite(y[t + 1]) or abs(y[t + 1]) > _NARMA_DIVERGE_LIMIT:
            raise ConfigError(f"NARMA recurrence diverged at step {t}")
    return y[1:]


def gen_narma10(length: int, seed: int, train_frac: float = DEFAULT_TRAIN_FRAC) -> TaskStream:
    """One-step-ahead NARMA-10 prediction: stimulus u(t), target y(t+1),
    u(t) ~ U[0, 0.5]. A divergent draw is retried on the next rng stream."""
    if length <= 20:
        raise ConfigError(f"NARMA-10 needs length > 20, got {length}")
    for attempt in range(_MAX_REDRAWS):
        u = stream_rng(seed, attempt).uniform(0.0, 0.5, length)
        try:
            y = narma10_targets(u)
        except ConfigError:
            continue
        return TaskStream(
            task="narma10",
            kind="regression",
            stimuli=u[:, None],
            targets=y[:, None],
            n_train=int(length * train_frac),
            ignore=np.zeros(length, dtype=bool),
            meta={"length": length, "seed": seed, "attempt": attempt,
                  "train_frac": train_frac},
        )
    raise ConfigError(f"NARMA-10 diverged on {_MAX_REDRAWS} consecutive draws")


# ---------------------------------------------------------------------------
# Delayed recall
# ---------------------------------------------------------------------------

def delayed_recall_targets(bits: np.ndarray, delay: int) -> tuple[np.ndarray, np.ndarray]:
    """Target class = input bit ``delay`` steps back; the first ``delay``
    records are marked ignore. Returns (targets, ignore)."""
    if delay < 1:
        raise ConfigError(f"delay must be >= 1, got {delay}")
    bits = np.asarray(bits, dtype=np.int64)
    targets = np.zeros_like(bits)
    targets[delay:] = bits[:-delay]
    ignore = np.zeros(bits.shape[0], dtype=bool)
    ignore[:delay] = True
    return targets, ignore


def gen_delayed_recall(
    length: int, delay: int, seed: int, train_frac: float = DEFAULT_TRAIN_FRAC
) -> TaskStream:
    """Binary recall: stimulus is a random bit, target is the bit from
    ``delay`` steps earlier. Pure memory, zero mapping difficulty."""
    if delay < 1:
        raise ConfigError(f"delay must be >= 1, got {delay}")
    if length <= delay + 50:
        raise ConfigError(f"length must exceed delay + 50, got {length}")
    bits = stream_rng(seed, 0).integers(0, 2, length)
    targets, ignore = delayed_recall_targets(bits, delay)
    return TaskStream(
        task="delayed-recall",
        kind="classification",
        stimuli=bits[:, None].astype(float),
        targets=targets,
        n_train=int(length * train_frac),
        ignore=ignore,
        n_classes=2,
        meta={"length": length, "delay": delay, "seed": seed, "train_frac": train_frac},
    )


# ---------------------------------------------------------------------------
# Temporal parity
# ---------------------------------------------------------------------------

def temporal_parity_targets(bits: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Target = XOR of the last ``window`` bits; first window-1 ignored."""
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    bits = np.asarray(bits, dtype=np.int64)
    t_len = bits.shape[0]
    csum = np.concatenate([[0], np.cumsum(bits)])
    targets = np.zeros(t_len, dtype=np.int64)
    for t in range(window - 1, t_len):
        targets[t] = (csum[t + 1] - csum[t + 1 - window]) % 2
    ignore = np.zeros(t_len, dtype=bool)
    ignore[: window - 1] = True
    return targets, ignore


def gen_temporal_parity(
    length: int, window: int, seed: int, train_frac: float = DEFAULT_TRAIN_FRAC
) -> TaskStream:
    """Parity of the last ``window`` input bits: memory plus a maximally
    nonlinear combination."""
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    if length <= window:
        raise ConfigError(f"length must exceed window, got {length}")
    bits = stream_rng(seed, 0).integers(0, 2, length)
    targets, ignore = temporal_parity_targets(bits, window)
    return TaskStream(
        task="temporal-parity",
        kind="classification",
        stimuli=bits[:, None].astype(float),
        targets=targets,
        n_train=int(length * train_frac),
        ignore=ignore,
        n_classes=2,
        meta={"length": length, "window": window, "seed": seed, "train_frac": train_frac},
    )


# ---------------------------------------------------------------------------
# Mackey-Glass
# ---------------------------------------------------------------------------

_MG_DT = 0.1
_MG_SUBSAMPLE = 10
_MG_TRANSIENT_SAMPLES = 1000
_MG_X0 = 1.2


def mackey_glass_series(n_samples: int, tau: float = 17.0, seed: int = 0) -> np.ndarray:
    """Raw (unnormalized) Mackey-Glass samples.

    Integrates dx/dt = 0.2 x(t-tau) / (1 + x(t-tau)^10) - 0.1 x(t) with
    an Euler step of 0.1, subsamples every 10 steps, and discards the
    first 1000 subsampled points as transient. The delay history starts
    at 1.2 plus a small seeded jitter so distinct seeds land on distinct
    stretches of the attractor. The integration scheme is fixed exactly
    so streams reproduce bit-for-bit.
    """
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    delay_steps = int(round(tau / _MG_DT))
    total_steps = (_MG_TRANSIENT_SAMPLES + n_samples) * _MG_SUBSAMPLE
    rng = stream_rng(seed, 0)
    history = np.empty(delay_steps + total_steps + 1)
    history[:delay_steps] = _MG_X0 + rng.uniform(-0.1, 0.1, delay_steps)
    history[delay_steps] = _MG_X0
    for k in range(delay_steps, delay_steps + total_steps):
        x_tau = history[k - delay_steps]
        x = history[k]
        history[k + 1] = x + _MG_DT * (0.2 * x_tau / (1.0 + x_tau**10) - 0.1 * x)
    sampled = history[delay_steps::_MG_SUBSAMPLE]
    return sampled[_MG_TRANSIENT_SAMPLES : _MG_TRANSIENT_SAMPLES + n_samples]


def gen_mackey_glass(
    length: int, tau: float = 17.0, seed: int = 0, train_frac: float = DEFAULT_TRAIN_FRAC
) -> TaskStream:
    """One-step-ahead prediction on the chaotic Mackey-Glass series,
    normalized to zero mean and unit variance over the train phase."""
    if length < 1:
        raise ConfigError(f"length must be >= 1, got {length}")
    series = mackey_glass_series(length + 1, tau=tau, seed=seed)
    n_train = int(length * train_frac)
    mu = float(np.mean(series[:n_train])) if n_train >= 1 else float(np.mean(series))
    sigma = float(np.std(series[:n_train])) if n_train >= 2 else float(np.std(series))
    if sigma == 0.0:
        raise ConfigError("degenerate constant series; cannot normalize")
    normed = (series - mu) / sigma
    return TaskStream(
        task="mackey-glass",
        kind="regression",
        stimuli=normed[:length, None],
        targets=normed[1 : length + 1, None],
        n_train=n_train,
        ignore=np.zeros(length, dtype=bool),
        meta={"length": length, "tau": tau, "seed": seed, "train_frac": train_frac,
              "mu": mu, "sigma": sigma},
    )


_GENERATORS = {
    "narma10": gen_narma10,
    "delayed-recall": gen_delayed_recall,
    "temporal-parity": gen_temporal_parity,
    "mackey-glass": gen_mackey_glass,
}


def generate(task: str, seed: int, **params) -> TaskStream:
    """Dispatch to a generator by task id."""
    if task not in _GENERATORS:
        raise ConfigError(f"unknown task {task!r}; known: {sorted(_GENERATORS)}")
    return _GENERATORS[task](seed=seed, **params)


# ---------------------------------------------------------------------------
# Line-delimited stream files: one JSON header line (sorted keys), then one
# JSON record per timestep with keys t, stimulus, target, phase, ignore.
# ---------------------------------------------------------------------------

def write_stream_jsonl(stream: TaskStream, path) -> None:
    header = {
        "format": "maelstrom-stream/1",
        "task": stream.task,
        "kind": stream.kind,
        "length": len(stream),
        "stimulus_dim": stream.stimulus_dim,
        "target_dim": stream.target_dim,
        "n_classes": stream.n_classes,
        "n_train": stream.n_train,
        "meta": stream.meta,
    }
    phases = stream.phases()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in range(len(stream)):
            if stream.kind == "classification":
                target = int(stream.targets[t])
            else:
                target = [float(v) for v in stream.targets[t]]
            record = {
                "t": t,
                "stimulus": [float(v) for v in stream.stimuli[t]],
                "target": target,
                "phase": str(phases[t]),
                "ignore": bool(stream.ignore[t]),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_stream_jsonl(path) -> TaskStream:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "maelstrom-stream/1":
            raise ConfigError(f"not a stream file: format={header.get('format')!r}")
        records = [json.loads(line) for line in fh if line.strip()]
    records.sort(key=lambda r: r["t"])
    stimuli = np.array([r["stimulus"] for r in records], dtype=float)
    if header["kind"] == "classification":
        targets = np.array([r["target"] for r in records], dtype=np.int64)
    else:
        targets = np.array([r["target"] for r in records], dtype=float)
    ignore = np.array([r["ignore"] for r in records], dtype=bool)
    return TaskStream(
        task=header["task"],
        kind=header["kind"],
        stimuli=stimuli,
        targets=targets,
        n_train=int(header["n_train"]),
        ignore=ignore,
        n_classes=header.get("n_classes"),
        meta=dict(header.get("meta") or {}),
    )
