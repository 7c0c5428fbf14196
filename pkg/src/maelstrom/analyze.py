"""Quantitative diagnostics of the frozen core's memory and dynamics.

Memory capacity probes the bare core (no learned input side): drive it
with i.i.d. uniform noise and ask, delay by delay, how well a ridge
readout reconstructs the input from ``d`` steps ago on held-out data.
The regime sweep maps how the divergence exponent and that capacity move
as the recurrent gain is turned up through the stable-to-chaotic range.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import MaelstromConfig, MaelstromCore, build, divergence_rate, step, zero_state
from .digest import config_digest
from .errors import ConfigError, ShapeError, SolverError
from .numerics import spectral_norm, stream_rng

DEFAULT_RIDGE_LAMBDA = 1e-6


@dataclass(frozen=True)
class MemoryCapacityReport:
    """Per-delay squared correlations and their sum (the total capacity).

    Each r2[d-1] is the squared Pearson correlation between the ridge
    reconstruction of u(t-d) and the truth on the held-out segment, so it
    lies in [0, 1] and the total is at most d_max (and, for i.i.d. input,
    theoretically at most the number of units).
    """

    n_units: int
    d_max: int
    r_squared: np.ndarray
    total: float
    seq_len: int
    ridge_lambda: float
    probe_seed: int
    config_digest: str


def memory_capacity(
    core: MaelstromCore,
    seq_len: int = 2200,
    d_max: int | None = None,
    lam: float = DEFAULT_RIDGE_LAMBDA,
    probe_seed: int = 0,
    washout: int = 100,
    holdout_frac: float = 0.3,
) -> MemoryCapacityReport:
    """Delay-reconstruction capacity of the bare core under i.i.d.
    u(t) ~ U[-1, 1]. Deterministic given (core, probe_seed).

    All delays share one state collection and one ridge factorization;
    the fit uses the earlier part of the driven run and r^2 is measured
    on the held-out tail (contiguous, no shuffling).
    """
    if core.config.input_dim != 1:
        raise ShapeError("memory capacity probes a scalar-input core (input_dim == 1)")
    if not (lam > 0.0):
        raise ConfigError(f"ridge lambda must be > 0, got {lam}")
    if d_max is None:
        d_max = min(2 * core.config.units, 200)
    if seq_len < washout + d_max + 50:
        raise ConfigError(
            f"seq_len {seq_len} too short for washout {washout} + d_max {d_max}"
        )
    n = core.config.units
    u = stream_rng(probe_seed, 0).uniform(-1.0, 1.0, seq_len)
    states = np.empty((seq_len, n))
    state = zero_state(core)
    for t in range(seq_len):
        state = step(core, state, u[t : t + 1])
        states[t] = state.x

    start = max(washout, d_max)
    times = np.arange(start, seq_len)
    x = np.vstack([states[times].T, np.ones(times.shape[0])])
    y = np.vstack([u[times - d] for d in range(1, d_max + 1)])

    n_fit = int(times.shape[0] * (1.0 - holdout_frac))
    if n_fit < n + 1 or times.shape[0] - n_fit < 10:
        raise ConfigError("probe run too short to split into fit and held-out parts")
    x_fit, y_fit = x[:, :n_fit], y[:, :n_fit]
    x_hold, y_hold = x[:, n_fit:], y[:, n_fit:]
    gram = x_fit @ x_fit.T + lam * np.eye(n + 1)
    try:
        w = np.linalg.solve(gram, x_fit @ y_fit.T).T
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"memory-capacity ridge fit failed: {exc}") from exc
    recon = w @ x_hold

    r2 = np.empty(d_max)
    truth_c = y_hold - y_hold.mean(axis=1, keepdims=True)
    recon_c = recon - recon.mean(axis=1, keepdims=True)
    for d in range(d_max):
        denom = np.sqrt(np.sum(truth_c[d] ** 2) * np.sum(recon_c[d] ** 2))
        if denom == 0.0:
            r2[d] = 0.0
        else:
            r2[d] = min(1.0, (float(np.dot(truth_c[d], recon_c[d])) / denom) ** 2)

    digest = config_digest(
        {
            "core": core.config.to_dict(),
            "seq_len": seq_len,
            "d_max": d_max,
            "lam": lam,
            "probe_seed": probe_seed,
            "washout": washout,
            "holdout_frac": holdout_frac,
        }
    )
    return MemoryCapacityReport(
        n_units=n,
        d_max=d_max,
        r_squared=r2,
        total=float(np.sum(r2)),
        seq_len=seq_len,
        ridge_lambda=lam,
        probe_seed=probe_seed,
        config_digest=digest,
    )


@dataclass(frozen=True)
class SweepRow:
    spectral_radius: float
    seed: int
    divergence_rate: float
    memory_capacity: float
    recurrent_spectral_norm: float

    def to_dict(self) -> dict:
        return {
            "spectral_radius": self.spectral_radius,
            "seed": self.seed,
            "divergence_rate": self.divergence_rate,
            "memory_capacity": self.memory_capacity,
            "recurrent_spectral_norm": self.recurrent_spectral_norm,
        }


def regime_sweep(
    template: MaelstromConfig,
    rho_values,
    seeds,
    dr_steps: int = 400,
    perturbation: float = 1e-8,
    mc_seq_len: int = 2200,
    mc_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> list[SweepRow]:
    """Build one core per (spectral radius, seed) from the template and
    record its divergence exponent and memory capacity, one row each.

    The recurrent spectral norm is included because the hard contraction
    guarantee is in terms of the norm, not the radius: every row with
    norm < 1 must show a negative rate.
    """
    if template.input_dim != 1:
        raise ConfigError("regime sweep template must have input_dim == 1 (capacity probe)")
    rows = []
    for rho in rho_values:
        if not (rho > 0.0):
            raise ConfigError(f"spectral radius values must be > 0, got {rho}")
        for seed in seeds:
            cfg = dataclasses.replace(template, spectral_radius=float(rho), seed=int(seed))
            core = build(cfg)
            rate = divergence_rate(
                core, dr_steps, perturbation, stream_rng(int(seed), 90)
            )
            mc = memory_capacity(core, seq_len=mc_seq_len, lam=mc_lambda, probe_seed=int(seed))
            rows.append(
                SweepRow(
                    spectral_radius=float(rho),
                    seed=int(seed),
                    divergence_rate=rate,
                    memory_capacity=mc.total,
                    recurrent_spectral_norm=spectral_norm(core.w_rec.value),
                )
            )
    return rows
