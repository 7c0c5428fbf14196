"""Strictly online per-timestep training, metrics, and oracle baselines.

The trainer sees one (stimulus, target) pair at a time, in stream order,
and never reads ahead: the parameter update at step t is a function of
data up to t only, and each step costs the same regardless of how far
into the sequence it is (no unrolling, nothing accumulates with t).

Two reference points bracket the online-trained assembly: a closed-form
ridge readout fitted to the bare core's states (the classic
reservoir-computing oracle), and a memoryless run of the identical
architecture with the core contribution zeroed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .assembly import Assembly, AssemblySpec, build_assembly, step_forward
from .autodiff import backward, mse_loss, softmax_xent_loss
from .core import MaelstromCore, MaelstromState, step, zero_state
from .errors import (
    ConfigError,
    DivergedError,
    MetricError,
    ShapeError,
    SolverError,
)
from .tasks import TaskStream

_OPTIMIZERS = ("sgd", "sgd-momentum", "adam")


@dataclass(frozen=True)
class TrainerConfig:
    """Optimizer choice and online-update policy.

    learning_rate 0 is allowed (useful as an "evaluate untrained" probe:
    losses are still computed and recorded, parameters never move).
    """

    optimizer: str = "sgd"
    learning_rate: float = 0.02
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    update_every: int = 1
    washout: int = 50
    gradient_clip: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; known: {_OPTIMIZERS}")
        # coerce numerics so YAML quirks (e.g. "1.0e150" read as str) fail
        # loudly here instead of deep in the math
        try:
            for name in ("learning_rate", "momentum", "beta1", "beta2", "eps"):
                object.__setattr__(self, name, float(getattr(self, name)))
            for name in ("update_every", "washout", "seed"):
                object.__setattr__(self, name, int(getattr(self, name)))
            if self.gradient_clip is not None:
                object.__setattr__(self, "gradient_clip", float(self.gradient_clip))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric trainer field: {exc}") from exc
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.update_every < 1:
            raise ConfigError(f"update_every must be >= 1, got {self.update_every}")
        if self.washout < 0:
            raise ConfigError(f"washout must be >= 0, got {self.washout}")
        if self.gradient_clip is not None and not (self.gradient_clip > 0.0):
            raise ConfigError(f"gradient_clip must be > 0 or None, got {self.gradient_clip}")

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "update_every": self.update_every,
            "washout": self.washout,
            "gradient_clip": self.gradient_clip,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class StepRecord:
    t: int
    loss: float
    prediction: np.ndarray
    target: object  # vector for regression, class index for classification
    phase: str  # "train" | "eval"


@dataclass(frozen=True)
class RunSummary:
    task: str
    mode: str
    seed: int
    steps: int
    metric_name: str  # "nmse" | "accuracy"
    train_metric: float | None
    eval_metric: float | None
    wallclock_s: float
    config_digest: str = ""

    def to_dict(self) -> dict:
        """JSON-ready dict. Wall-clock is intentionally excluded: output
        files must be byte-identical across reruns; timing goes to the
        console instead."""
        return {
            "task": self.task,
            "mode": self.mode,
            "seed": self.seed,
            "steps": self.steps,
            "metric_name": self.metric_name,
            "train_metric": self.train_metric,
            "eval_metric": self.eval_metric,
            "config_digest": self.config_digest,
        }


def nmse(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error divided by target variance (population).

    1.0 means "as good as predicting the mean"; 0 is perfect.
    """
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ShapeError(f"nmse shapes differ: {preds.shape} vs {targets.shape}")
    if preds.shape[0] < 2:
        raise MetricError(f"nmse needs at least 2 records, got {preds.shape[0]}")
    var = float(np.var(targets))
    if var == 0.0:
        raise MetricError("nmse undefined: target variance is zero")
    return float(np.mean((preds - targets) ** 2)) / var


def accuracy(pred_classes: np.ndarray, target_classes: np.ndarray) -> float:
    pred_classes = np.asarray(pred_classes)
    target_classes = np.asarray(target_classes)
    if pred_classes.shape != target_classes.shape:
        raise ShapeError("accuracy shapes differ")
    if pred_classes.shape[0] == 0:
        raise MetricError("accuracy needs at least one record")
    return float(np.mean(pred_classes == target_classes))


class OnlineTrainer:
    """Single-pass gradient trainer with an internal step counter.

    Per train step (past the washout): build the step graph, attach the
    loss, run backward, and — on every update_every-th step — clip and
    apply the accumulated gradients to the active parameters, then zero
    them. Eval steps run the forward pass only.
    """

    def __init__(self, config: TrainerConfig):
        self.config = config
        self.steps_seen = 0
        self._slots: dict[str, dict] = {}

    # -- optimizer ---------------------------------------------------------

    def _slot(self, param) -> dict:
        s = self._slots.get(param.name)
        if s is None:
            s = {"m": np.zeros_like(param.value), "v": np.zeros_like(param.value), "t": 0}
            self._slots[param.name] = s
        return s

    def apply_update(self, params) -> None:
        cfg = self.config
        if cfg.gradient_clip is not None:
            total = 0.0
            for p in params:
                total += float(np.sum(p.grad * p.grad))
            norm = np.sqrt(total)
            if norm > cfg.gradient_clip:
                scale = cfg.gradient_clip / norm
                for p in params:
                    p.grad *= scale
        lr = cfg.learning_rate
        if cfg.optimizer == "sgd":
            for p in params:
                p.value -= lr * p.grad
        elif cfg.optimizer == "sgd-momentum":
            for p in params:
                s = self._slot(p)
                s["m"][...] = cfg.momentum * s["m"] + p.grad
                p.value -= lr * s["m"]
        else:  # adam
            for p in params:
                s = self._slot(p)
                s["t"] += 1
                s["m"][...] = cfg.beta1 * s["m"] + (1.0 - cfg.beta1) * p.grad
                s["v"][...] = cfg.beta2 * s["v"] + (1.0 - cfg.beta2) * p.grad * p.grad
                m_hat = s["m"] / (1.0 - cfg.beta1 ** s["t"])
                v_hat = s["v"] / (1.0 - cfg.beta2 ** s["t"])
                p.value -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

    # -- stepping ----------------------------------------------------------

    def online_step(
        self,
        asm: Assembly,
        state: MaelstromState,
        stimulus,
        target,
        phase: str = "train",
        ignore: bool = False,
        mode: str = "full",
    ) -> tuple[StepRecord, MaelstromState]:
        t = self.steps_seen
        fp = step_forward(asm, state, stimulus, mode=mode)
        if asm.active_head.spec.kind == "classification":
            loss_node = softmax_xent_loss(fp.output, int(target))
        else:
            loss_node = mse_loss(fp.output, np.asarray(target, dtype=float))
        loss = float(loss_node.value)
        if not np.isfinite(loss):
            raise DivergedError(t)
        cfg = self.config
        if phase == "train" and not ignore and t >= cfg.washout:
            backward(loss_node)
            if t % cfg.update_every == 0:
                params = asm.active_params()
                self.apply_update(params)
                for p in params:
                    p.zero_grad()
        self.steps_seen = t + 1
        record = StepRecord(
            t=t, loss=loss, prediction=fp.prediction.copy(), target=target, phase=phase
        )
        return record, fp.new_state


def online_step(trainer, asm, state, stimulus, target, **kwargs):
    return trainer.online_step(asm, state, stimulus, target, **kwargs)


def _phase_metric(stream: TaskStream, records: list[StepRecord],
                  lo: int, hi: int, min_t: int) -> float | None:
    idx = [t for t in range(max(lo, min_t), hi) if not stream.ignore[t]]
    if not idx:
        return None
    if stream.kind == "classification":
        preds = np.array([int(np.argmax(records[t].prediction)) for t in idx])
        return accuracy(preds, stream.targets[idx])
    if len(idx) < 2:
        return None
    preds = np.stack([records[t].prediction for t in idx])
    return nmse(preds, stream.targets[idx])


def run_online(
    trainer: OnlineTrainer,
    asm: Assembly,
    stream: TaskStream,
    mode: str = "full",
    reset_state_before_eval: bool = False,
) -> tuple[list[StepRecord], RunSummary]:
    """One causal pass over the stream: updates during the train phase,
    inference only afterwards. The state keeps evolving into the eval
    phase (a running agent does not reset) unless explicitly asked to.

    Summary metrics come from the eval records; records flagged ignore
    and the first ``washout`` train steps are excluded from metrics.
    """
    if stream.kind == "classification":
        if asm.active_head.spec.kind != "classification":
            raise ConfigError("classification stream needs a classification head")
        if stream.n_classes != asm.active_head.spec.output_dim:
            raise ConfigError(
                f"head emits {asm.active_head.spec.output_dim} logits but stream has "
                f"{stream.n_classes} classes"
            )
    else:
        if asm.active_head.spec.kind != "regression":
            raise ConfigError("regression stream needs a regression head")
        if stream.target_dim != asm.active_head.spec.output_dim:
            raise ConfigError(
                f"head emits {asm.active_head.spec.output_dim} values but stream targets "
                f"have dimension {stream.target_dim}"
            )
    started = time.perf_counter()
    state = zero_state(asm.core)
    records: list[StepRecord] = []
    for t in range(len(stream)):
        phase = "train" if t < stream.n_train else "eval"
        if reset_state_before_eval and t == stream.n_train:
            state = zero_state(asm.core)
        if stream.kind == "classification":
            target = int(stream.targets[t])
        else:
            target = stream.targets[t]
        record, state = trainer.online_step(
            asm, state, stream.stimuli[t], target,
            phase=phase, ignore=bool(stream.ignore[t]), mode=mode,
        )
        records.append(record)
    washout = trainer.config.washout
    metric_name = "accuracy" if stream.kind == "classification" else "nmse"
    train_metric = _phase_metric(stream, records, 0, stream.n_train, washout)
    eval_metric = _phase_metric(stream, records, stream.n_train, len(stream), 0)
    summary = RunSummary(
        task=stream.task,
        mode=mode,
        seed=int(stream.meta.get("seed", -1)),
        steps=len(stream),
        metric_name=metric_name,
        train_metric=train_metric,
        eval_metric=eval_metric,
        wallclock_s=time.perf_counter() - started,
    )
    return records, summary


# ---------------------------------------------------------------------------
# Oracle baselines
# ---------------------------------------------------------------------------

def ridge_oracle(
    core: MaelstromCore, stream: TaskStream, lam: float, washout: int = 50
) -> tuple[np.ndarray, RunSummary]:
    """Closed-form linear readout on the bare core.

    The core is driven by the raw stimuli through its drive matrix (the
    learned input side is bypassed), post-washout train states augmented
    with a constant 1 are collected, and

        W_out = Y X^T (X X^T + lam I)^(-1)

    is solved exactly. Eval-phase states (the state keeps evolving) are
    scored with the fitted readout. This is the "how good can a linear
    map of the frozen states be" reference for the online-trained runs.
    """
    if lam < 0.0:
        raise ConfigError(f"ridge lambda must be >= 0, got {lam}")
    if stream.stimulus_dim != core.config.input_dim:
        raise ShapeError(
            f"stream stimuli have dim {stream.stimulus_dim} but the core drive "
            f"expects {core.config.input_dim}"
        )
    started = time.perf_counter()
    n = core.config.units
    t_len = len(stream)
    states = np.empty((t_len, n))
    state = zero_state(core)
    for t in range(t_len):
        state = step(core, state, stream.stimuli[t])
        states[t] = state.x

    train_rows = [t for t in range(washout, stream.n_train) if not stream.ignore[t]]
    if len(train_rows) < n + 1:
        raise ConfigError(
            f"need at least units+1 = {n + 1} usable train steps, got {len(train_rows)}"
        )
    x = np.vstack([states[train_rows].T, np.ones(len(train_rows))])
    if stream.kind == "classification":
        y = np.zeros((stream.n_classes, len(train_rows)))
        y[stream.targets[train_rows], np.arange(len(train_rows))] = 1.0
    else:
        y = stream.targets[train_rows].T
    gram = x @ x.T
    if lam > 0.0:
        gram = gram + lam * np.eye(n + 1)
    try:
        w_out = np.linalg.solve(gram, x @ y.T).T
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"ridge system is singular ({exc}); use lam > 0 to regularize"
        ) from exc

    def _metric(rows: list[int]) -> float | None:
        if not rows:
            return None
        feats = np.vstack([states[rows].T, np.ones(len(rows))])
        preds = w_out @ feats
        if stream.kind == "classification":
            return accuracy(np.argmax(preds, axis=0), stream.targets[rows])
        if len(rows) < 2:
            return None
        return nmse(preds.T, stream.targets[rows])

    eval_rows = [t for t in range(stream.n_train, t_len) if not stream.ignore[t]]
    summary = RunSummary(
        task=stream.task,
        mode="ridge-oracle",
        seed=int(stream.meta.get("seed", -1)),
        steps=t_len,
        metric_name="accuracy" if stream.kind == "classification" else "nmse",
        train_metric=_metric(train_rows),
        eval_metric=_metric(eval_rows),
        wallclock_s=time.perf_counter() - started,
    )
    return w_out, summary


def memoryless_baseline(
    spec: AssemblySpec, stream: TaskStream, trainer_config: TrainerConfig
) -> RunSummary:
    """Train the identical architecture with the core contribution zeroed
    (skip path only): what a mapper of the current stimulus alone
    achieves. On tasks needing memory this pins the chance floor."""
    asm = build_assembly(spec)
    trainer = OnlineTrainer(trainer_config)
    _, summary = run_online(trainer, asm, stream, mode="memoryless")
    return summary
