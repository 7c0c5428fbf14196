"""Acceptance gate: one test per shipped guarantee, at its stated
tolerance, each printing a single PASS/FAIL line (run with -s to stream
them). Experiment thresholds were frozen from pilot runs with the seed
lists used below; the pilot numbers are quoted inline next to each
assertion.
"""

import dataclasses
import json
import time

import numpy as np
import pytest

from maelstrom.analyze import memory_capacity, regime_sweep
from maelstrom.assembly import (
    AssemblySpec,
    HeadSpec,
    attach_head,
    build_assembly,
    readout_forward,
    select_head,
    step_forward,
)
from maelstrom.autodiff import grad_check, mse_loss, softmax_xent_loss
from maelstrom.cli import main
from maelstrom.core import (
    MaelstromConfig,
    MaelstromCore,
    build,
    divergence_rate,
    esp_probe,
    serialize_core,
    zero_state,
)
from maelstrom.numerics import derive_seed, spectral_norm, stream_rng
from maelstrom.tasks import gen_delayed_recall, gen_narma10, truncate
from maelstrom.training import (
    OnlineTrainer,
    TrainerConfig,
    memoryless_baseline,
    ridge_oracle,
    run_online,
)

SEEDS = [1, 2, 3, 4, 5]


def _report(num: int, name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance {num:02d}] {name}: {status}  {detail}")
    assert passed, f"criterion {num} ({name}) failed: {detail}"


def _norm_scaled_core(config: MaelstromConfig, target_norm: float) -> MaelstromCore:
    core = build(config)
    w = core.w_rec.value * (target_norm / spectral_norm(core.w_rec.value))
    return MaelstromCore(config, w, core.w_drive.value, core.bias.value, core.w_fb.value)


def test_01_gradient_correctness():
    """Reverse-mode vs central differences on 20 random assemblies with
    the state held fixed (no dynamics in the graph)."""
    started = time.perf_counter()
    worst = 0.0
    for case in range(20):
        rng = stream_rng(1000 + case)
        n_units = int(rng.integers(2, 33))
        iface = int(rng.integers(1, 7))
        kind = "classification" if case % 2 else "regression"
        out_dim = int(rng.integers(2, 4)) if kind == "classification" else int(rng.integers(1, 4))
        depth = int(rng.integers(0, 3))
        layers = tuple(
            (int(rng.integers(2, 13)), str(rng.choice(["tanh", "relu"])))
            for _ in range(depth)
        )
        spec = AssemblySpec(
            stimulus_dim=int(rng.integers(1, 4)),
            output_dim=out_dim,
            maelstrom=MaelstromConfig(
                units=n_units, input_dim=iface,
                feedback_dim=int(rng.integers(1, 5)), seed=case,
            ),
            input_layers=layers,
            interface_in_dim=iface,
            combine_dim=int(rng.integers(2, 13)),
            output_layers=tuple(
                (int(rng.integers(2, 13)), "tanh") for _ in range(int(rng.integers(0, 2)))
            ),
            head_kind=kind,
            seed=2000 + case,
        )
        asm = build_assembly(spec)
        stim = rng.uniform(-1, 1, spec.stimulus_dim)
        fb = rng.uniform(-1, 1, spec.maelstrom.feedback_dim)
        x_state = rng.uniform(-1, 1, n_units)
        target = rng.uniform(-1, 1, out_dim)
        cls = int(rng.integers(0, out_dim))

        def builder():
            out = readout_forward(asm, stim, fb, x_state)
            if kind == "classification":
                return softmax_xent_loss(out, cls)
            return mse_loss(out, target)

        worst = max(worst, grad_check(builder, asm.learnable_params(), eps=1e-5))
    elapsed = time.perf_counter() - started
    _report(1, "gradient correctness", worst < 1e-4 and elapsed < 60,
            f"max rel err {worst:.3e} (< 1e-4), {elapsed:.1f}s (< 60s)")


def test_02_gradient_blocking():
    """Core bytes untouched by 10000 online steps; frozen gradient
    accumulators exactly zero after every backward pass."""
    stream = gen_narma10(10_000, seed=derive_seed(3, 0))
    spec = AssemblySpec(
        stimulus_dim=1, output_dim=1, head_kind="regression",
        maelstrom=MaelstromConfig(input_dim=8, seed=derive_seed(3, 1)),
        seed=derive_seed(3, 2),
    )
    asm = build_assembly(spec)
    before = serialize_core(asm.core)
    run_online(OnlineTrainer(TrainerConfig()), asm, stream)
    bytes_ok = serialize_core(asm.core) == before

    asm2 = build_assembly(spec)
    trainer = OnlineTrainer(TrainerConfig(washout=0))
    state = zero_state(asm2.core)
    zeros_ok = True
    for t in range(100):
        _, state = trainer.online_step(
            asm2, state, stream.stimuli[t], stream.targets[t]
        )
        for p in asm2.frozen_params():
            if p.grad.tobytes() != np.zeros_like(p.grad).tobytes():
                zeros_ok = False
    _report(2, "gradient blocking", bytes_ok and zeros_ok,
            f"core bytes identical: {bytes_ok}; frozen grads zero x100 steps: {zeros_ok}")


def test_03_echo_state_contraction():
    """Spectral norm 0.8, leak 1: unit separation under shared drive
    decays below 1e-6 within 200 steps and the per-step ratio never
    exceeds 0.8 (checked above the float64 rounding floor of 1e-12)."""
    decay_ok, ratio_ok = True, True
    worst_final, worst_ratio = 0.0, 0.0
    for seed in SEEDS:
        cfg = MaelstromConfig(units=100, leak_rate=1.0, input_dim=1, seed=seed)
        core = _norm_scaled_core(cfg, 0.8)
        drive = stream_rng(9000 + seed).uniform(-0.5, 0.5, (200, 1))
        x0b = stream_rng(9100 + seed).standard_normal(100)
        x0b /= np.linalg.norm(x0b)
        curve = esp_probe(core, drive, np.zeros(100), x0b)
        worst_final = max(worst_final, float(curve[-1]))
        if curve[-1] >= 1e-6:
            decay_ok = False
        live = curve[:-1] > 1e-12
        ratios = curve[1:][live] / curve[:-1][live]
        worst_ratio = max(worst_ratio, float(np.max(ratios)))
        if np.any(ratios > 0.8 + 1e-9):
            ratio_ok = False
    _report(3, "echo-state contraction", decay_ok and ratio_ok,
            f"worst final dist {worst_final:.2e} (< 1e-6), worst ratio {worst_ratio:.6f} (<= 0.8)")


def test_04_online_causality_and_constant_step_cost():
    """Prefix records survive tail truncation bit-for-bit; median step
    time at t ~ 1e4 within 2x of t ~ 1e2."""
    causal_ok = True
    for maker, length in [
        (lambda s: gen_narma10(3000, seed=s), 3000),
        (lambda s: gen_delayed_recall(2000, delay=3, seed=s), 2000),
    ]:
        stream = maker(derive_seed(11, 0))
        kind = stream.kind
        spec = AssemblySpec(
            stimulus_dim=1,
            output_dim=2 if kind == "classification" else 1,
            head_kind=kind,
            maelstrom=MaelstromConfig(units=80, input_dim=8, seed=derive_seed(11, 1)),
            seed=derive_seed(11, 2),
        )

        def run(s):
            asm = build_assembly(spec)
            records, _ = run_online(OnlineTrainer(TrainerConfig()), asm, s)
            return records

        cut = int(length * 0.8)
        full, short = run(stream), run(truncate(stream, cut))
        for a, b in zip(full[:cut], short):
            if (a.loss != b.loss or a.prediction.tobytes() != b.prediction.tobytes()
                    or a.t != b.t or a.phase != b.phase):
                causal_ok = False
                break

    stream = gen_narma10(10_200, seed=derive_seed(12, 0))
    spec = AssemblySpec(
        stimulus_dim=1, output_dim=1, head_kind="regression",
        maelstrom=MaelstromConfig(units=50, input_dim=8, seed=derive_seed(12, 1)),
        seed=derive_seed(12, 2),
    )
    asm = build_assembly(spec)
    trainer = OnlineTrainer(TrainerConfig())
    state = zero_state(asm.core)
    times = np.empty(10_200)
    for t in range(10_200):
        tic = time.perf_counter()
        _, state = trainer.online_step(asm, state, stream.stimuli[t], stream.targets[t])
        times[t] = time.perf_counter() - tic
    early = float(np.median(times[100:300]))
    late = float(np.median(times[10_000:10_200]))
    cost_ok = late <= 2.0 * early
    _report(4, "online causality + O(1) step cost", causal_ok and cost_ok,
            f"prefix bit-identical: {causal_ok}; step time {early*1e6:.0f}us -> {late*1e6:.0f}us "
            f"(ratio {late/early:.2f} <= 2)")


def test_05_sequence_memory_beats_memoryless():
    """Delayed recall d=3 at package defaults: full-mode median accuracy
    at least 0.9 while memoryless stays at chance 0.5 +- 0.05.

    Threshold 0.9 frozen after pilots with these exact seeds (pilot:
    full accuracy 1.000 on all five seeds; memoryless median 0.494)."""
    full_acc, mem_acc = [], []
    for seed in SEEDS:
        stream = gen_delayed_recall(12_000, delay=3, seed=derive_seed(seed, 0))
        spec = AssemblySpec(
            stimulus_dim=1, output_dim=2, head_kind="classification",
            maelstrom=MaelstromConfig(input_dim=8, seed=derive_seed(seed, 1)),
            seed=derive_seed(seed, 2),
        )
        asm = build_assembly(spec)
        _, full = run_online(OnlineTrainer(TrainerConfig()), asm, stream)
        full_acc.append(full.eval_metric)
        mem_acc.append(memoryless_baseline(spec, stream, TrainerConfig()).eval_metric)
    full_med = float(np.median(full_acc))
    mem_med = float(np.median(mem_acc))
    ok = full_med >= 0.9 and abs(mem_med - 0.5) <= 0.05
    _report(5, "sequence memory beats memoryless", ok,
            f"full median {full_med:.3f} (>= 0.9); memoryless median {mem_med:.3f} (0.5 +- 0.05)")


def test_06_narma_comparative_ordering():
    """Shared-stream NARMA-10: full-mode median NMSE at least 20% below
    memoryless, and the closed-form ridge readout at or below full.

    Operating point and orderings frozen after pilots with these seeds
    (pilot medians: full 0.408, memoryless 0.901, ridge 0.026)."""
    fulls, mems, ridges = [], [], []
    for seed in SEEDS:
        stream = gen_narma10(12_000, seed=derive_seed(seed, 0))
        spec = AssemblySpec(
            stimulus_dim=1, output_dim=1, head_kind="regression",
            maelstrom=MaelstromConfig(input_dim=8, weight_range=(-0.2, 0.2),
                                      seed=derive_seed(seed, 1)),
            seed=derive_seed(seed, 2),
        )
        trainer_cfg = TrainerConfig(optimizer="adam", learning_rate=1e-3)
        asm = build_assembly(spec)
        _, full = run_online(OnlineTrainer(trainer_cfg), asm, stream)
        fulls.append(full.eval_metric)
        mems.append(memoryless_baseline(spec, stream, trainer_cfg).eval_metric)
        core = build(MaelstromConfig(input_dim=1, weight_range=(-0.2, 0.2),
                                     seed=derive_seed(seed, 1)))
        _, ridge = ridge_oracle(core, stream, lam=1e-6)
        ridges.append(ridge.eval_metric)
    full_med = float(np.median(fulls))
    mem_med = float(np.median(mems))
    ridge_med = float(np.median(ridges))
    ok = full_med <= 0.8 * mem_med and ridge_med <= full_med
    _report(6, "NARMA-10 comparative ordering", ok,
            f"median NMSE full {full_med:.3f} <= 0.8 x memoryless {mem_med:.3f}; "
            f"ridge {ridge_med:.3f} <= full")


def test_07_memory_capacity_bound():
    """Total capacity under i.i.d. input stays below units + 0.5."""
    ok = True
    worst = ""
    for n_units in (10, 50):
        for seed in SEEDS:
            core = build(MaelstromConfig(units=n_units, input_dim=1, seed=seed))
            rep = memory_capacity(core, seq_len=2200, probe_seed=seed)
            if rep.total > n_units + 0.5:
                ok = False
                worst = f"N={n_units} seed={seed} MC={rep.total:.2f}"
    _report(7, "memory capacity bound", ok, worst or "MC <= N + 0.5 for N in {10, 50}, 5 seeds")


def test_08_regime_monotonicity():
    """Median divergence exponent non-decreasing in the recurrent gain;
    negative whenever the recurrent spectral norm is below 1."""
    template = MaelstromConfig(units=100, input_dim=1)
    rho_values = [0.5, 0.9, 1.2, 1.5]
    rows = regime_sweep(template, rho_values, SEEDS, dr_steps=400)
    medians = [
        float(np.median([r.divergence_rate for r in rows if r.spectral_radius == rho]))
        for rho in rho_values
    ]
    monotone = all(a <= b for a, b in zip(medians, medians[1:]))

    subunit = [r for r in rows if r.recurrent_spectral_norm < 1.0]
    negative = all(r.divergence_rate < 0.0 for r in subunit)
    cfg = MaelstromConfig(units=100, leak_rate=1.0, input_dim=1, seed=77)
    probe = divergence_rate(_norm_scaled_core(cfg, 0.8), 300, 1e-8, stream_rng(77, 90))
    negative = negative and probe <= np.log(0.8) + 1e-9
    _report(8, "regime monotonicity", monotone and negative and len(subunit) >= 1,
            f"medians {['%.3f' % m for m in medians]} non-decreasing: {monotone}; "
            f"{len(subunit)} sub-unit-norm rows all negative: {negative}")


def test_09_multi_head_isolation():
    """With the trunk frozen, 5000 steps of training head B leave head
    A's parameters and its 500-step probe predictions byte-identical."""
    spec = AssemblySpec(
        stimulus_dim=1, output_dim=2, head_kind="classification",
        maelstrom=MaelstromConfig(units=100, input_dim=8, seed=derive_seed(21, 1)),
        seed=derive_seed(21, 2),
    )
    asm = build_assembly(spec)
    head_b = attach_head(asm, HeadSpec(output_dim=2, kind="classification",
                                       seed=derive_seed(21, 3)))
    asm.freeze_trunk()

    probe = gen_delayed_recall(500, delay=2, seed=derive_seed(21, 4))

    def probe_predictions():
        select_head(asm, 0)
        state = zero_state(asm.core)
        out = []
        for t in range(len(probe)):
            fp = step_forward(asm, state, probe.stimuli[t])
            out.append(fp.prediction.copy())
            state = fp.new_state
        return np.stack(out).tobytes()

    params_before = {p.name: p.value.tobytes() for p in asm.heads[0].params()}
    preds_before = probe_predictions()

    train = gen_delayed_recall(5000, delay=2, seed=derive_seed(21, 5))
    select_head(asm, head_b)
    trainer = OnlineTrainer(TrainerConfig())
    state = zero_state(asm.core)
    for t in range(len(train)):
        _, state = trainer.online_step(
            asm, state, train.stimuli[t], int(train.targets[t]),
            ignore=bool(train.ignore[t]),
        )

    params_after = {p.name: p.value.tobytes() for p in asm.heads[0].params()}
    preds_after = probe_predictions()
    b_changed = False
    fresh = build_assembly(spec)
    attach_head(fresh, HeadSpec(output_dim=2, kind="classification",
                                seed=derive_seed(21, 3)))
    for p, q in zip(asm.heads[head_b].params(), fresh.heads[head_b].params()):
        if p.value.tobytes() != q.value.tobytes():
            b_changed = True
    ok = params_before == params_after and preds_before == preds_after and b_changed
    _report(9, "multi-head isolation", ok,
            f"head A params identical: {params_before == params_after}; "
            f"probe predictions identical: {preds_before == preds_after}; "
            f"head B actually trained: {b_changed}")


def test_10_end_to_end_determinism(tmp_path):
    """cmd_run twice with identical config and seeds produces
    byte-identical output files (summaries, tables, traces)."""
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        "task:\n  id: narma10\n  length: 800\n"
        "maelstrom:\n  units: 50\n"
        "assembly:\n  interface_in_dim: 8\n"
        "trainer:\n  learning_rate: 0.01\n"
        "seeds: [1, 2]\nmode: full\n"
    )
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    code_a = main(["run", "--config", str(cfg), "--out", out_a, "--trace", "--quiet"])
    code_b = main(["run", "--config", str(cfg), "--out", out_b, "--trace", "--quiet"])
    same = all(
        (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()
        for suffix in (".jsonl", ".csv", ".trace.jsonl")
    )
    ok = code_a == 0 and code_b == 0 and same
    _report(10, "end-to-end determinism", ok,
            f"exit codes {code_a},{code_b}; files byte-identical: {same}")
