"""Wiring of the full network around the frozen core.

Signal path per timestep:

    stimulus ++ feedback --> input net --> interface-in --+--> core step
                                                          |        |
                                             skip (learned)   detached state
                                                          |        |
                                               combine (+) <-- interface-out
                                                          |
                                                     output net --> prediction

The feedback and the state enter the graph through detach, and the core
is driven by the numeric value of the interface-in output, so no gradient
ever touches the four core tensors. With the skip enabled it is the sole
gradient route to the input side; disabling it leaves the input side
untrainable (the reservoir-with-readout ablation).

Multiple heads (interface-out + output net pairs) can share one trunk and
one core; their parameter sets are disjoint, so training one head cannot
move another.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Param, add, affine, concat, constant, detach, relu_node, tanh_node
from .core import (
    MaelstromConfig,
    MaelstromCore,
    MaelstromState,
    build,
    feedback,
    step,
)
from .errors import ConfigError, InputError, ShapeError, UsageError
from .numerics import derive_seed, stream_rng

_ACTIVATIONS = ("tanh", "relu", "identity")

# RNG stream layout for learnable init: one stream per trunk component so
# optional parts (skip) never shift the draws of the others.
_STREAM_INPUT_NET = 0
_STREAM_INTERFACE_IN = 1
_STREAM_SKIP = 2
_SLOT_HEAD0_SEED = 3


def _check_layers(layers, what: str) -> tuple[tuple[int, str], ...]:
    out = []
    for entry in layers:
        width, act = entry
        width = int(width)
        if width < 1:
            raise ConfigError(f"{what} layer width must be >= 1, got {width}")
        if act not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {act!r}; known: {_ACTIVATIONS}")
        out.append((width, str(act)))
    return tuple(out)


@dataclass(frozen=True)
class HeadSpec:
    """Per-head readout: hidden layers after the combine point, plus the
    task kind of the final layer (identity regression values or raw
    classification logits)."""

    output_layers: tuple[tuple[int, str], ...] = ()
    output_dim: int = 1
    kind: str = "regression"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "output_layers", _check_layers(self.output_layers, "output"))
        if self.output_dim < 1:
            raise ConfigError(f"output_dim must be >= 1, got {self.output_dim}")
        if self.kind not in ("regression", "classification"):
            raise ConfigError(f"unknown head kind {self.kind!r}")


@dataclass(frozen=True)
class AssemblySpec:
    """Complete architecture description; fully determines the network
    together with its seed."""

    stimulus_dim: int
    output_dim: int
    maelstrom: MaelstromConfig = MaelstromConfig()
    input_layers: tuple[tuple[int, str], ...] = ((16, "tanh"),)
    interface_in_dim: int = 8
    skip_enabled: bool = True
    combine_dim: int = 64
    output_layers: tuple[tuple[int, str], ...] = ()
    head_kind: str = "regression"
    seed: int = 0

    def __post_init__(self):
        if self.stimulus_dim < 1:
            raise ConfigError(f"stimulus_dim must be >= 1, got {self.stimulus_dim}")
        if self.output_dim < 1:
            raise ConfigError(f"output_dim must be >= 1, got {self.output_dim}")
        if self.combine_dim < 1:
            raise ConfigError(f"combine_dim must be >= 1, got {self.combine_dim}")
        object.__setattr__(self, "input_layers", _check_layers(self.input_layers, "input"))
        object.__setattr__(self, "output_layers", _check_layers(self.output_layers, "output"))
        if self.head_kind not in ("regression", "classification"):
            raise ConfigError(f"unknown head kind {self.head_kind!r}")
        if self.interface_in_dim != self.maelstrom.input_dim:
            raise ConfigError(
                f"interface_in_dim ({self.interface_in_dim}) must equal the core "
                f"drive dimension ({self.maelstrom.input_dim})"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["maelstrom"] = self.maelstrom.to_dict()
        d["input_layers"] = [list(e) for e in self.input_layers]
        d["output_layers"] = [list(e) for e in self.output_layers]
        return d


@dataclass
class Layer:
    w: Param
    b: Param
    activation: str


@dataclass
class Head:
    head_id: int
    spec: HeadSpec
    interface_out: Layer
    output_net: list[Layer]

    def params(self) -> list[Param]:
        out = [self.interface_out.w, self.interface_out.b]
        for layer in self.output_net:
            out += [layer.w, layer.b]
        return out


@dataclass
class ForwardPass:
    """Result of one wired step: the numeric prediction, the advanced
    state, and the loss-ready graph root."""

    prediction: np.ndarray
    new_state: MaelstromState
    output: Node
    drive: np.ndarray | None
    feedback: np.ndarray


class Assembly:
    """Learnable trunk + heads around one frozen core."""

    def __init__(self, spec: AssemblySpec, core: MaelstromCore,
                 input_net: list[Layer], interface_in: Layer, skip: Layer | None):
        self.spec = spec
        self.core = core
        self.input_net = input_net
        self.interface_in = interface_in
        self.skip = skip
        self.heads: dict[int, Head] = {}
        self.active_head_id = 0
        self._next_head_id = 0

    # -- parameter bookkeeping -------------------------------------------

    def trunk_params(self) -> list[Param]:
        out = []
        for layer in self.input_net:
            out += [layer.w, layer.b]
        out += [self.interface_in.w, self.interface_in.b]
        if self.skip is not None:
            out += [self.skip.w, self.skip.b]
        return out

    def learnable_params(self) -> list[Param]:
        """Every tensor outside the core, in stable construction order."""
        out = self.trunk_params()
        for head_id in sorted(self.heads):
            out += self.heads[head_id].params()
        return out

    def frozen_params(self) -> list[Param]:
        """Exactly the four core tensors."""
        return self.core.frozen_params()

    def active_params(self) -> list[Param]:
        """Params the trainer may update: unfrozen trunk plus the active
        head. Inactive heads are never touched, even with stateful
        optimizers."""
        head = self.heads[self.active_head_id]
        return [p for p in self.trunk_params() + head.params() if not p.frozen]

    def freeze_trunk(self) -> None:
        for p in self.trunk_params():
            p.frozen = True

    @property
    def active_head(self) -> Head:
        return self.heads[self.active_head_id]


def _init_layer(rng: np.random.Generator, name: str, fan_in: int, fan_out: int,
                activation: str) -> Layer:
    bound = 1.0 / np.sqrt(fan_in)
    w = Param(f"{name}.w", rng.uniform(-bound, bound, (fan_out, fan_in)))
    b = Param(f"{name}.b", rng.uniform(-bound, bound, fan_out))
    return Layer(w, b, activation)


def _build_head(head_id: int, head_spec: HeadSpec, units: int, combine_dim: int) -> Head:
    rng_io = stream_rng(head_spec.seed, 0)
    rng_out = stream_rng(head_spec.seed, 1)
    prefix = f"head{head_id}"
    # linear state readout: nonlinearity, when wanted, belongs to the
    # head's hidden layers, not the interface
    interface_out = _init_layer(rng_io, f"{prefix}.interface_out", units, combine_dim, "identity")
    output_net = []
    fan_in = combine_dim
    for k, (width, act) in enumerate(head_spec.output_layers):
        output_net.append(_init_layer(rng_out, f"{prefix}.output_net.{k}", fan_in, width, act))
        fan_in = width
    final_idx = len(head_spec.output_layers)
    output_net.append(
        _init_layer(rng_out, f"{prefix}.output_net.{final_idx}", fan_in,
                    head_spec.output_dim, "identity")
    )
    return Head(head_id, head_spec, interface_out, output_net)


def build_assembly(spec: AssemblySpec) -> Assembly:
    """Construct core and learnable nets from the spec.

    Learnable weights and biases are uniform in [-1/sqrt(fan_in),
    +1/sqrt(fan_in)], drawn from per-component seeded streams, so the
    whole assembly is a pure function of (spec, seed).
    """
    core = build(spec.maelstrom)
    rng_in = stream_rng(spec.seed, _STREAM_INPUT_NET)
    input_net = []
    fan_in = spec.stimulus_dim + spec.maelstrom.feedback_dim
    for k, (width, act) in enumerate(spec.input_layers):
        input_net.append(_init_layer(rng_in, f"input_net.{k}", fan_in, width, act))
        fan_in = width
    interface_in = _init_layer(
        stream_rng(spec.seed, _STREAM_INTERFACE_IN), "interface_in",
        fan_in, spec.interface_in_dim, "tanh",
    )
    skip = None
    if spec.skip_enabled:
        skip = _init_layer(
            stream_rng(spec.seed, _STREAM_SKIP), "skip",
            spec.interface_in_dim, spec.combine_dim, "identity",
        )
    asm = Assembly(spec, core, input_net, interface_in, skip)
    head0 = HeadSpec(
        output_layers=spec.output_layers,
        output_dim=spec.output_dim,
        kind=spec.head_kind,
        seed=derive_seed(spec.seed, _SLOT_HEAD0_SEED),
    )
    attach_head(asm, head0)
    return asm


def attach_head(asm: Assembly, head_spec: HeadSpec) -> int:
    """Add a head sharing the trunk and core; returns its id. The first
    attached head becomes active."""
    head_id = asm._next_head_id
    asm.heads[head_id] = _build_head(
        head_id, head_spec, asm.spec.maelstrom.units, asm.spec.combine_dim
    )
    asm._next_head_id += 1
    if len(asm.heads) == 1:
        asm.active_head_id = head_id
    return head_id


def select_head(asm: Assembly, head_id: int) -> None:
    if head_id not in asm.heads:
        raise UsageError(f"unknown head id {head_id}; have {sorted(asm.heads)}")
    asm.active_head_id = head_id


def _apply_layer(layer: Layer, x: Node) -> Node:
    out = affine(layer.w, layer.b, x)
    if layer.activation == "tanh":
        return tanh_node(out)
    if layer.activation == "relu":
        return relu_node(out)
    return out


def _input_side(asm: Assembly, stimulus: np.ndarray, fb: np.ndarray) -> Node:
    f = detach(constant(fb))
    h = concat(constant(stimulus), f)
    for layer in asm.input_net:
        h = _apply_layer(layer, h)
    return _apply_layer(asm.interface_in, h)


def _readout_side(asm: Assembly, interface_in_out: Node | None,
                  state_x: np.ndarray | None) -> Node:
    head = asm.active_head
    parts = []
    if state_x is not None:
        parts.append(_apply_layer(head.interface_out, detach(constant(state_x))))
    if asm.skip is not None and interface_in_out is not None:
        parts.append(_apply_layer(asm.skip, interface_in_out))
    if not parts:
        raise ConfigError("no path to the readout: need the core or the skip")
    h = parts[0] if len(parts) == 1 else add(parts[0], parts[1])
    for layer in head.output_net:
        h = _apply_layer(layer, h)
    return h


def step_forward(asm: Assembly, state: MaelstromState, stimulus,
                 mode: str = "full") -> ForwardPass:
    """One wired timestep.

    mode "full": feedback from the previous state, core stepped by the
    numeric interface-in value, readout from the detached new state plus
    the skip. mode "memoryless": feedback and core contribution replaced
    by zero and the state not advanced — the skip path is the only route,
    measuring what a mapper of the current stimulus alone can do.
    """
    if mode not in ("full", "memoryless"):
        raise UsageError(f"unknown mode {mode!r}")
    stimulus = np.asarray(stimulus, dtype=float)
    if stimulus.shape != (asm.spec.stimulus_dim,):
        raise ShapeError(
            f"stimulus must have shape {(asm.spec.stimulus_dim,)}, got {stimulus.shape}"
        )
    if not np.all(np.isfinite(stimulus)):
        raise InputError("stimulus contains non-finite values")
    if mode == "memoryless" and asm.skip is None:
        raise ConfigError("memoryless mode requires skip_enabled")

    if mode == "memoryless":
        fb = np.zeros(asm.spec.maelstrom.feedback_dim)
    else:
        fb = feedback(asm.core, state)
    i = _input_side(asm, stimulus, fb)

    if mode == "full":
        new_state = step(asm.core, state, np.asarray(i.value))
        state_x = new_state.x
        drive = np.asarray(i.value)
    else:
        new_state = MaelstromState(state.x, state.t + 1)
        state_x = None
        drive = None

    out = _readout_side(asm, i, state_x)
    return ForwardPass(
        prediction=out.value, new_state=new_state, output=out, drive=drive, feedback=fb
    )


def readout_forward(asm: Assembly, stimulus, fb, state_x) -> Node:
    """Build the complete learnable graph with a caller-fixed state vector;
    the core is not stepped. Because nothing in the graph depends on the
    core dynamics, finite differences over the learnable params agree with
    reverse-mode here — this is the gradient-verification surface."""
    stimulus = np.asarray(stimulus, dtype=float)
    i = _input_side(asm, stimulus, np.asarray(fb, dtype=float))
    return _readout_side(asm, i, np.asarray(state_x, dtype=float))


# ---------------------------------------------------------------------------
# Snapshots. Byte layout mirrors the core dump: one JSON header line with
# the spec, head specs, and a (name, shape, frozen) manifest; then all
# tensors as little-endian float64 in manifest order (the four core tensors
# first, then every learnable param in stable order).
# ---------------------------------------------------------------------------

_SNAPSHOT_MAGIC = "maelstrom-assembly/1"


def _head_spec_dict(hs: HeadSpec) -> dict:
    return {
        "output_layers": [list(e) for e in hs.output_layers],
        "output_dim": hs.output_dim,
        "kind": hs.kind,
        "seed": hs.seed,
    }


def serialize_assembly(asm: Assembly) -> bytes:
    tensors = [(p.name, p) for p in asm.frozen_params() + asm.learnable_params()]
    header = {
        "format": _SNAPSHOT_MAGIC,
        "spec": asm.spec.to_dict(),
        "heads": [[hid, _head_spec_dict(asm.heads[hid].spec)] for hid in sorted(asm.heads)],
        "active_head": asm.active_head_id,
        "manifest": [[name, list(p.value.shape), p.frozen] for name, p in tensors],
    }
    blob = b"".join(
        np.ascontiguousarray(p.value, dtype="<f8").tobytes() for _, p in tensors
    )
    return json.dumps(header, sort_keys=True).encode() + b"\n" + blob


def deserialize_assembly(data: bytes) -> Assembly:
    head_line, _, blob = data.partition(b"\n")
    header = json.loads(head_line.decode())
    if header.get("format") != _SNAPSHOT_MAGIC:
        raise ConfigError(f"not an assembly snapshot: format={header.get('format')!r}")
    spec_dict = dict(header["spec"])
    m = dict(spec_dict["maelstrom"])
    m["weight_range"] = tuple(m["weight_range"])
    spec_dict["maelstrom"] = MaelstromConfig(**m)
    spec_dict["input_layers"] = tuple(tuple(e) for e in spec_dict["input_layers"])
    spec_dict["output_layers"] = tuple(tuple(e) for e in spec_dict["output_layers"])
    spec = AssemblySpec(**spec_dict)
    asm = build_assembly(spec)
    for hid, hs_dict in header["heads"]:
        if hid in asm.heads:
            continue
        hs = HeadSpec(
            output_layers=tuple(tuple(e) for e in hs_dict["output_layers"]),
            output_dim=hs_dict["output_dim"],
            kind=hs_dict["kind"],
            seed=hs_dict["seed"],
        )
        attach_head(asm, hs)
    by_name = {p.name: p for p in asm.frozen_params() + asm.learnable_params()}
    offset = 0
    for name, shape, frozen in header["manifest"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        param = by_name[name]
        param.value = np.ascontiguousarray(arr.reshape(shape), dtype=float)
        param.grad = np.zeros_like(param.value)
        param.frozen = bool(frozen)
    asm.active_head_id = int(header["active_head"])
    return asm


def save_snapshot(asm: Assembly, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_assembly(asm))


def load_snapshot(path) -> Assembly:
    with open(path, "rb") as fh:
        return deserialize_assembly(fh.read())
