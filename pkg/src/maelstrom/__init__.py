"""Frozen recurrent state cores with online-trained feed-forward
input and readout networks.

The core ("maelstrom") is a fixed, unlearned recurrent system: it keeps a
state that carries information across timesteps, but no gradient ever
passes through it. Everything that learns — the input network, the
interfaces, the skip path, and the readout heads — is a plain feed-forward
mapper trained one timestep at a time on the instantaneous error. This
gives sequence memory without unrolling anything through time: one step,
one graph, one update.
"""

from .analyze import MemoryCapacityReport, SweepRow, memory_capacity, regime_sweep
from .assembly import (
    Assembly,
    AssemblySpec,
    ForwardPass,
    HeadSpec,
    attach_head,
    build_assembly,
    deserialize_assembly,
    load_snapshot,
    readout_forward,
    save_snapshot,
    select_head,
    serialize_assembly,
    step_forward,
)
from .autodiff import (
    Node,
    Param,
    add,
    affine,
    backward,
    concat,
    constant,
    detach,
    grad_check,
    mse_loss,
    relu_node,
    softmax_xent_loss,
    tanh_node,
    zero_grads,
)
from .core import (
    COLLAPSED_DIVERGENCE,
    MaelstromConfig,
    MaelstromCore,
    MaelstromState,
    build,
    deserialize_core,
    divergence_rate,
    esp_probe,
    feedback,
    serialize_core,
    step,
    zero_state,
)
from .errors import (
    ConfigError,
    DivergedError,
    InputError,
    MaelstromError,
    MetricError,
    ShapeError,
    SolverError,
    UnscalableError,
    UsageError,
)
from .numerics import (
    SpectralEstimate,
    derive_seed,
    estimate_spectral_norm,
    estimate_spectral_radius,
    random_sparse_matrix,
    scale_to_spectral_radius,
    spectral_norm,
    spectral_radius,
    stream_rng,
)
from .tasks import (
    TaskStream,
    gen_delayed_recall,
    gen_mackey_glass,
    gen_narma10,
    gen_temporal_parity,
    generate,
    mackey_glass_series,
    read_stream_jsonl,
    split,
    truncate,
    write_stream_jsonl,
)
from .training import (
    OnlineTrainer,
    RunSummary,
    StepRecord,
    TrainerConfig,
    accuracy,
    memoryless_baseline,
    nmse,
    online_step,
    ridge_oracle,
    run_online,
)

__version__ = "0.1.0"
