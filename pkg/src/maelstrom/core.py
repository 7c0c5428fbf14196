"""The maelstrom: a frozen recurrently connected state core.

The core holds four tensors (recurrent matrix, drive-input matrix, bias,
feedback projection) that are generated once from a seed and never
trained. State evolves by a leaky tanh update driven by the learned input
side; the surrounding networks read the state but gradients never pass
through it. Diagnostics here make the core's dynamical regime testable:
trajectory contraction under shared drive (the echo-state precondition)
and a finite-time divergence exponent for the chaotic regime.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Param
from .errors import ConfigError, InputError, ShapeError, UnscalableError
from .numerics import (
    random_sparse_matrix,
    scale_to_spectral_radius,
    spectral_radius,
    stream_rng,
)

# Returned by divergence_rate when the separation collapses to exactly
# zero in one step (e.g. zero recurrent matrix with leak 1): the true
# exponent is -infinity, the sentinel keeps downstream tables finite.
COLLAPSED_DIVERGENCE = -1e9

# RNG stream layout for build(): recurrent-matrix attempts use streams
# 0..9, the remaining tensors fixed streams so a retry never shifts them.
_STREAM_DRIVE = 10
_STREAM_BIAS = 11
_STREAM_FEEDBACK = 12
_MAX_BUILD_ATTEMPTS = 10


@dataclass(frozen=True)
class MaelstromConfig:
    """Construction parameters for a core. Activation is fixed to tanh.

    The default leak of 1.0 keeps the per-step imprint of the drive
    sharp; fractional leaks low-pass the state and measurably blur
    discrete inputs together (delay-recall readout ceilings drop well
    below usable at leak 0.3), so slow integration is opt-in per task.
    """

    units: int = 200
    spectral_radius: float = 0.9
    leak_rate: float = 1.0
    recurrent_density: float = 0.1
    input_dim: int = 1
    feedback_dim: int = 8
    weight_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        try:
            for name in ("units", "input_dim", "feedback_dim", "seed"):
                object.__setattr__(self, name, int(getattr(self, name)))
            for name in ("spectral_radius", "leak_rate", "recurrent_density"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric core field: {exc}") from exc
        if self.units < 1:
            raise ConfigError(f"units must be >= 1, got {self.units}")
        if not (self.spectral_radius > 0.0):
            raise ConfigError(f"spectral_radius must be > 0, got {self.spectral_radius}")
        if not (0.0 < self.leak_rate <= 1.0):
            raise ConfigError(f"leak_rate must be in (0, 1], got {self.leak_rate}")
        if not (0.0 < self.recurrent_density <= 1.0):
            raise ConfigError(
                f"recurrent_density must be in (0, 1], got {self.recurrent_density}"
            )
        if self.input_dim < 1 or self.feedback_dim < 1:
            raise ConfigError("input_dim and feedback_dim must be >= 1")
        object.__setattr__(self, "weight_range", tuple(float(v) for v in self.weight_range))
        low, high = self.weight_range
        if not (low < high):
            raise ConfigError(f"weight_range must satisfy low < high, got {self.weight_range}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weight_range"] = list(self.weight_range)
        return d


@dataclass(frozen=True)
class MaelstromState:
    """State vector plus timestep counter; the only cross-step memory."""

    x: np.ndarray
    t: int = 0


class MaelstromCore:
    """Config plus the four frozen tensors, wrapped as frozen Params so
    gradient accumulators exist (and can be asserted exactly zero)."""

    __slots__ = ("config", "w_rec", "w_drive", "bias", "w_fb")

    def __init__(self, config: MaelstromConfig, w_rec, w_drive, bias, w_fb):
        n = config.units
        w_rec = np.asarray(w_rec, dtype=float)
        w_drive = np.asarray(w_drive, dtype=float)
        bias = np.asarray(bias, dtype=float)
        w_fb = np.asarray(w_fb, dtype=float)
        if w_rec.shape != (n, n):
            raise ShapeError(f"w_rec must be {(n, n)}, got {w_rec.shape}")
        if w_drive.shape != (n, config.input_dim):
            raise ShapeError(f"w_drive must be {(n, config.input_dim)}, got {w_drive.shape}")
        if bias.shape != (n,):
            raise ShapeError(f"bias must be {(n,)}, got {bias.shape}")
        if w_fb.shape != (config.feedback_dim, n):
            raise ShapeError(f"w_fb must be {(config.feedback_dim, n)}, got {w_fb.shape}")
        self.config = config
        self.w_rec = Param("core.w_rec", w_rec, frozen=True)
        self.w_drive = Param("core.w_drive", w_drive, frozen=True)
        self.bias = Param("core.bias", bias, frozen=True)
        self.w_fb = Param("core.w_fb", w_fb, frozen=True)

    def frozen_params(self) -> list[Param]:
        return [self.w_rec, self.w_drive, self.bias, self.w_fb]


def build(config: MaelstromConfig) -> MaelstromCore:
    """Generate a core from its config.

    The recurrent matrix is drawn sparse-uniform and rescaled to the
    target spectral radius. A degenerate draw with zero radius (possible
    for tiny sparse matrices) is retried on the next rng stream, up to
    10 attempts.
    """
    low, high = config.weight_range
    n = config.units
    w_rec = None
    for attempt in range(_MAX_BUILD_ATTEMPTS):
        candidate = random_sparse_matrix(
            n, n, config.recurrent_density, low, high, stream_rng(config.seed, attempt)
        )
        try:
            w_rec = scale_to_spectral_radius(candidate, config.spectral_radius)
            break
        except UnscalableError:
            continue
    if w_rec is None:
        raise ConfigError(
            f"recurrent matrix had zero spectral radius on {_MAX_BUILD_ATTEMPTS} attempts"
        )
    w_drive = stream_rng(config.seed, _STREAM_DRIVE).uniform(low, high, (n, config.input_dim))
    bias = stream_rng(config.seed, _STREAM_BIAS).uniform(low, high, n)
    # feedback projection is uniform like the rest but scaled by
    # 1/sqrt(units): it contracts an O(sqrt(N))-norm state to an O(1)
    # vector, so feedback and stimulus enter the input net at comparable
    # magnitude instead of the feedback drowning the stimulus
    w_fb = stream_rng(config.seed, _STREAM_FEEDBACK).uniform(
        low, high, (config.feedback_dim, n)
    ) / np.sqrt(n)
    return MaelstromCore(config, w_rec, w_drive, bias, w_fb)


def zero_state(core: MaelstromCore) -> MaelstromState:
    return MaelstromState(np.zeros(core.config.units), 0)


def step(core: MaelstromCore, state: MaelstromState, drive) -> MaelstromState:
    """One leaky-integrator update:

        x' = (1 - leak) * x + leak * tanh(W_rec x + W_drive d + bias)

    Pure function; the input state is not modified.
    """
    drive = np.asarray(drive, dtype=float)
    if drive.shape != (core.config.input_dim,):
        raise ShapeError(
            f"drive must have shape {(core.config.input_dim,)}, got {drive.shape}"
        )
    if not np.all(np.isfinite(drive)):
        raise InputError("drive contains non-finite values")
    alpha = core.config.leak_rate
    pre = core.w_rec.value @ state.x + core.w_drive.value @ drive + core.bias.value
    x_new = (1.0 - alpha) * state.x + alpha * np.tanh(pre)
    return MaelstromState(x_new, state.t + 1)


def feedback(core: MaelstromCore, state: MaelstromState) -> np.ndarray:
    """Top-down feedback W_fb @ x. Callers must treat the result as a
    plain number: it re-enters the learnable side through a detach."""
    return core.w_fb.value @ state.x


def esp_probe(core: MaelstromCore, drive_seq, x0_a, x0_b) -> np.ndarray:
    """Distance between two trajectories under one shared drive sequence.

    Returns per-step Euclidean distances ||x_a(t) - x_b(t)||, one entry
    per drive step. Decay to zero is the echo-state (initial-condition
    forgetting) behaviour; persistent separation indicates the chaotic
    regime.
    """
    sa = MaelstromState(np.asarray(x0_a, dtype=float), 0)
    sb = MaelstromState(np.asarray(x0_b, dtype=float), 0)
    if not (np.all(np.isfinite(sa.x)) and np.all(np.isfinite(sb.x))):
        raise InputError("initial states must be finite")
    out = np.empty(len(drive_seq))
    for i, d in enumerate(drive_seq):
        sa = step(core, sa, d)
        sb = step(core, sb, d)
        out[i] = np.linalg.norm(sa.x - sb.x)
    return out


def divergence_rate(
    core: MaelstromCore,
    steps: int,
    perturbation: float,
    rng: np.random.Generator,
    washout: int = 50,
) -> float:
    """Finite-time divergence exponent of the autonomous (zero-drive)
    dynamics: the mean of ln(||delta(t+1)|| / ||delta(t)||) along a
    trajectory, renormalizing the separation to ``perturbation`` every
    step. Positive values indicate local divergence (chaos), negative
    values contraction. Returns COLLAPSED_DIVERGENCE if the separation
    hits exactly zero.
    """
    if not (perturbation > 0.0):
        raise ConfigError(f"perturbation must be > 0, got {perturbation}")
    n = core.config.units
    no_drive = np.zeros(core.config.input_dim)
    state = MaelstromState(rng.uniform(-0.5, 0.5, n), 0)
    for _ in range(washout):
        state = step(core, state, no_drive)
    delta = rng.standard_normal(n)
    delta *= perturbation / np.linalg.norm(delta)
    log_ratios = np.empty(steps)
    for i in range(steps):
        nudged = MaelstromState(state.x + delta, state.t)
        state = step(core, state, no_drive)
        nudged = step(core, nudged, no_drive)
        dist = float(np.linalg.norm(nudged.x - state.x))
        if dist == 0.0:
            return COLLAPSED_DIVERGENCE
        log_ratios[i] = np.log(dist / perturbation)
        delta = (nudged.x - state.x) * (perturbation / dist)
    return float(np.mean(log_ratios))


# ---------------------------------------------------------------------------
# Serialization. Byte layout: one JSON header line (sorted keys) holding the
# config and the tensor manifest, then the raw tensors as little-endian
# float64 in C order, concatenated in manifest order:
# w_rec, w_drive, bias, w_fb.
# ---------------------------------------------------------------------------

_MAGIC = "maelstrom-core/1"


def serialize_core(core: MaelstromCore) -> bytes:
    tensors = [
        ("w_rec", core.w_rec.value),
        ("w_drive", core.w_drive.value),
        ("bias", core.bias.value),
        ("w_fb", core.w_fb.value),
    ]
    header = {
        "format": _MAGIC,
        "config": core.config.to_dict(),
        "tensors": [[name, list(v.shape)] for name, v in tensors],
    }
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in tensors)
    return json.dumps(header, sort_keys=True).encode() + b"\n" + blob


def deserialize_core(data: bytes) -> MaelstromCore:
    head, _, blob = data.partition(b"\n")
    header = json.loads(head.decode())
    if header.get("format") != _MAGIC:
        raise ConfigError(f"not a serialized core: format={header.get('format')!r}")
    cfg_dict = dict(header["config"])
    cfg_dict["weight_range"] = tuple(cfg_dict["weight_range"])
    config = MaelstromConfig(**cfg_dict)
    arrays = {}
    offset = 0
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).astype(float)
        offset += count * 8
    return MaelstromCore(
        config, arrays["w_rec"], arrays["w_drive"], arrays["bias"], arrays["w_fb"]
    )
