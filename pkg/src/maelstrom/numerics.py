"""Dense float64 linear algebra helpers: seeded matrix generation and
dominant eigenvalue / singular value estimation by power iteration.

Matrices are plain C-order ``numpy.ndarray`` values and are treated as
immutable once created. Randomness always flows through :func:`stream_rng`
so that every constructor is a pure function of (shape, parameters, seed,
stream).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ShapeError, UnscalableError

DEFAULT_MAX_ITERS = 1000
DEFAULT_TOL = 1e-10


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for (seed, stream).

    Streams are split off the root seed with ``SeedSequence`` spawn keys, so
    the same (seed, stream) pair yields the same draw sequence on every run
    and platform, and distinct streams are statistically independent.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.default_rng(ss)


def derive_seed(seed: int, slot: int) -> int:
    """Stable 64-bit sub-seed for component ``slot`` of a run seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(slot),))
    return int(ss.generate_state(1, np.uint64)[0])


def random_sparse_matrix(
    rows: int,
    cols: int,
    density: float,
    low: float,
    high: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Matrix whose entries are nonzero with probability ``density``,
    nonzero values drawn uniformly from [low, high].

    Draw order is fixed (one row-major mask pass, one row-major value
    pass), so the result is fully determined by the rng state. Sparsity is
    a generation-time property only; the returned array is dense.
    """
    if rows < 1 or cols < 1:
        raise ConfigError(f"matrix shape must be at least 1x1, got {rows}x{cols}")
    if not (0.0 < density <= 1.0):
        raise ConfigError(f"density must be in (0, 1], got {density}")
    if not (low < high):
        raise ConfigError(f"need low < high, got [{low}, {high}]")
    mask = rng.random((rows, cols)) < density
    values = rng.uniform(low, high, (rows, cols))
    return np.where(mask, values, 0.0)


class SpectralEstimate(NamedTuple):
    """Power-iteration result: the estimate plus whether the iteration
    reached the requested relative tolerance before ``max_iters``."""

    value: float
    converged: bool
    iterations: int


def estimate_spectral_radius(
    w: np.ndarray, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL
) -> SpectralEstimate:
    """Dominant eigenvalue magnitude via power iteration.

    Starts from the deterministic all-ones direction. If the norm ratios
    converge (real dominant eigenvalue) the last ratio is returned. If the
    iteration oscillates, which happens when the dominant eigenvalues form
    a complex pair, the geometric mean of the ratios is returned instead —
    it converges to the true modulus at O(1/k) — with converged=False.
    The estimate is exactly positively homogeneous: estimating c*W yields
    c times the estimate for W, which makes rescaling self-consistent.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"spectral radius needs a square matrix, got {w.shape}")
    n = w.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    prev = None
    log_sum = 0.0
    for k in range(1, max_iters + 1):
        wv = w @ v
        ratio = float(np.linalg.norm(wv))
        if ratio == 0.0:
            return SpectralEstimate(0.0, True, k)
        v = wv / ratio
        log_sum += math.log(ratio)
        if prev is not None and abs(ratio - prev) <= tol * max(ratio, 1e-300):
            return SpectralEstimate(ratio, True, k)
        prev = ratio
    return SpectralEstimate(math.exp(log_sum / max_iters), False, max_iters)


def spectral_radius(
    w: np.ndarray, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL
) -> float:
    return estimate_spectral_radius(w, max_iters, tol).value


def estimate_spectral_norm(
    w: np.ndarray, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL
) -> SpectralEstimate:
    """Largest singular value via power iteration on W^T W.

    W^T W is symmetric positive semidefinite, so the ratio sequence is
    guaranteed to converge; no averaging fallback is needed.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ShapeError(f"spectral norm needs a 2-d matrix, got shape {w.shape}")
    n = w.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    prev = None
    for k in range(1, max_iters + 1):
        gv = w.T @ (w @ v)
        ratio = float(np.linalg.norm(gv))
        if ratio == 0.0:
            return SpectralEstimate(0.0, True, k)
        v = gv / ratio
        if prev is not None and abs(ratio - prev) <= tol * max(ratio, 1e-300):
            return SpectralEstimate(math.sqrt(ratio), True, k)
        prev = ratio
    return SpectralEstimate(math.sqrt(prev), False, max_iters)


def spectral_norm(
    w: np.ndarray, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL
) -> float:
    return estimate_spectral_norm(w, max_iters, tol).value


def scale_to_spectral_radius(w: np.ndarray, target: float) -> np.ndarray:
    """Rescale a square matrix so its spectral radius equals ``target``.

    Because the estimator is positively homogeneous, re-measuring the
    scaled matrix reproduces ``target`` up to floating-point rounding, and
    scaling twice to the same target is idempotent.
    """
    if not (target > 0.0):
        raise ConfigError(f"target spectral radius must be positive, got {target}")
    w = np.asarray(w, dtype=float)
    radius = spectral_radius(w)
    if radius == 0.0:
        raise UnscalableError("matrix has zero spectral radius; cannot scale")
    return w * (target / radius)
