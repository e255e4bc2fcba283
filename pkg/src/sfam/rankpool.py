"""Rank pooling of map sequences into single maps.

The pooled descriptor d* is the parameter vector of a pairwise ranking SVM
trained so that later time-average features score higher. It is found by a
deterministic averaged projected-subgradient method with step 1/(lambda*k)
(full-batch pair sums; pair counts are small at this scale). Approximate
rank pooling is the closed-form linear surrogate with fixed coefficients
used inside gradient-trained encoders.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .encode import ActionMap
from .errors import DataError

_OBJECTIVE_CHECK_EVERY = 100


@dataclass
class RankPoolConfig:
    lam: float = 1.0
    max_epochs: int = 5000
    tol: float = 1e-8
    direction: str = "forward"

    def __post_init__(self):
        if self.lam <= 0:
            raise DataError("lam must be positive")
        if self.max_epochs < 1:
            raise DataError("max_epochs must be >= 1")
        if self.direction not in ("forward", "backward"):
            raise DataError(f"unknown direction {self.direction!r}")


@dataclass
class PoolingResult:
    """Pooled descriptor (one entry per pixel), with the objective value and
    the count of margin-violated pairs at the solution."""

    d_star: np.ndarray
    objective_value: float
    pair_violations: int


def time_average_features(maps):
    """Running means V_t of the flattened maps, t = 1..T."""
    if not maps:
        raise DataError("need at least one map")
    flat = [np.asarray(m, dtype=np.float64).ravel() for m in maps]
    dim = flat[0].size
    for f in flat:
        if f.size != dim:
            raise DataError("maps differ in dimensions")
    sums = np.cumsum(np.stack(flat), axis=0)
    counts = np.arange(1, len(flat) + 1, dtype=np.float64)[:, None]
    return list(sums / counts)


def _pair_differences(v):
    t = len(v)
    rows = []
    for i in range(t):
        for q in range(i + 1, t):
            rows.append(v[q] - v[i])
    return np.ascontiguousarray(np.stack(rows))


def rank_pool(maps, cfg=None):
    """Solve the ranking objective for one map sequence.

    With direction "backward" the sequence is reversed before pooling. A
    single map has no ranking pairs and pools to the zero descriptor.
    """
    cfg = cfg or RankPoolConfig()
    if not maps:
        raise DataError("need at least one map")
    seq = list(maps)
    if cfg.direction == "backward":
        seq = seq[::-1]
    shape = np.asarray(seq[0]).shape
    v = time_average_features(seq)
    if len(v) == 1:
        return PoolingResult(np.zeros(shape).ravel(), 0.0, 0)

    w_pairs = _pair_differences(v)
    lam = cfg.lam
    # E(0) = 1, so the optimum satisfies lam/2 ||d||^2 <= 1.
    radius = float(np.sqrt(2.0 / lam))
    d = np.zeros(w_pairs.shape[1])
    d_sum = np.zeros_like(d)
    k = 0
    obj_prev = None
    while k < cfg.max_epochs:
        n_steps = min(_OBJECTIVE_CHECK_EVERY, cfg.max_epochs - k)
        k = kernels.pegasos_chunk(w_pairs, lam, d, d_sum, k, n_steps, radius)
        d_avg = d_sum / k
        obj, _ = kernels.rank_objective(w_pairs, d_avg, lam)
        if obj_prev is not None and abs(obj_prev - obj) <= cfg.tol * max(1.0, abs(obj)):
            break
        obj_prev = obj

    d_avg = d_sum / k
    obj, violations = kernels.rank_objective(w_pairs, d_avg, lam)
    return PoolingResult(d_avg, float(obj), int(violations))


def rank_pool_grids(maps, cfg=None):
    """Rank-pool a sequence of H x W grids into one H x W grid."""
    shape = np.asarray(maps[0]).shape
    result = rank_pool(maps, cfg)
    return result.d_star.reshape(shape)


def rank_pool_map_sequence(maps, cfg=None, variant_tag=None):
    """Pool each channel of a 3-channel map sequence independently and stack
    the reshaped descriptors into an ActionMap (RPf or RPb by direction)."""
    cfg = cfg or RankPoolConfig()
    if len(maps) < 2:
        raise DataError(f"need >= 2 maps, got {len(maps)}")
    if variant_tag is None:
        variant_tag = "RPf" if cfg.direction == "forward" else "RPb"
    pooled = [
        rank_pool_grids([m.channels()[i] for m in maps], cfg) for i in range(3)
    ]
    return ActionMap(pooled[0], pooled[1], pooled[2], variant_tag)


def approx_rank_pool_coefficients(t_total):
    """Closed-form pooling coefficients; they sum to zero for every length."""
    if t_total < 1:
        raise DataError("need at least one map")
    harmonic = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, t_total + 1))))
    t = np.arange(1, t_total + 1, dtype=np.float64)
    return 2.0 * (t_total - t + 1.0) - (t_total + 1.0) * (harmonic[t_total] - harmonic[:-1])


def approximate_rank_pool(maps):
    """Linear pooling with the fixed coefficients; differentiable by
    construction (the gradient w.r.t. map t is coefficient t)."""
    if not maps:
        raise DataError("need at least one map")
    alphas = approx_rank_pool_coefficients(len(maps))
    out = np.zeros_like(np.asarray(maps[0], dtype=np.float64))
    for alpha, m in zip(alphas, maps):
        out += alpha * np.asarray(m, dtype=np.float64)
    return out
