"""Consistent sparse coding solvers.

For a dictionary D and an observation y = f(x), sparse codes are found by
proximal gradient descent on

    F(a) = cost(D a, y) + lam * psi(a),

where cost is the distance-to-feasibility data term from
:mod:`nlcs.measurements` and psi is either the l1 norm (soft-threshold prox)
or a hard sparsity constraint ||a||_0 <= K (top-K prox, which recovers
consistent iterative hard thresholding).  One iteration is

    a <- prox(a + mu1 * D^T (proj(D a) - D a)),

with mu1 <= 1 / ||D||_2^2 guaranteeing a non-increasing objective in the
convex case.  An adaptive scheme re-solves with geometrically decreasing
lam, warm-starting each stage, until the data term falls below a target
consistency epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .linops import prox_l0_topk, prox_l1, spectral_norm
from .measurements import (
    GeneralLinear,
    Observation,
    _project_onto_feasibility,
    cost,
    project_linear,
)

__all__ = [
    "L1",
    "L0",
    "SolverConfig",
    "HomotopyConfig",
    "StageRecord",
    "SolveTrace",
    "DivergenceError",
    "objective",
    "sparse_code_fixed",
    "sparse_code_adaptive",
    "consistency_level",
    "batch_projector",
    "sparse_code_batch",
]


class DivergenceError(RuntimeError):
    """The objective became non-finite (user-supplied step too large)."""


@dataclass(frozen=True)
class L1:
    """l1 penalty with weight lam (lam = 0 disables shrinkage)."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class L0:
    """Hard sparsity constraint: at most k nonzero coefficients."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


Regularizer = Union[L1, L0]


@dataclass(frozen=True)
class SolverConfig:
    regularizer: Regularizer
    step: Optional[float] = None  # None -> 1 / ||D||_2^2
    max_iters: int = 400
    rel_tol: float = 1e-8
    accelerate: bool = False

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


@dataclass(frozen=True)
class HomotopyConfig:
    inner: SolverConfig
    lam0: Optional[float] = None  # None -> ||D^T proj(0)||_inf
    decay: float = 0.5
    epsilon: float = 1e-3
    max_stages: int = 60

    def __post_init__(self):
        if not isinstance(self.inner.regularizer, L1):
            raise ValueError("the adaptive scheme varies lam and needs an L1 regularizer")
        if not 0 < self.decay < 1:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_stages < 1:
            raise ValueError("max_stages must be >= 1")


@dataclass
class StageRecord:
    lam: float
    consistency: float
    penalty: float
    iterations: int


@dataclass
class SolveTrace:
    """Verbatim record of a solve: objective values as they occurred."""

    objectives: np.ndarray
    iterations: int
    converged: bool
    consistency: float
    stages: List[StageRecord] = field(default_factory=list)


def _resolve_step(cfg: SolverConfig, d: np.ndarray) -> float:
    if cfg.step is not None:
        return cfg.step
    s = spectral_norm(d)
    return 1.0 / (s * s) if s > 0 else 1.0


def _penalty(reg: Regularizer, alpha: np.ndarray) -> float:
    if isinstance(reg, L1):
        return reg.lam * float(np.sum(np.abs(alpha)))
    return 0.0


def _prox(reg: Regularizer, alpha: np.ndarray, step: float) -> np.ndarray:
    if isinstance(reg, L1):
        return prox_l1(alpha, reg.lam * step)
    return prox_l0_topk(alpha, reg.k)


def objective(d: np.ndarray, alpha: np.ndarray, obs: Observation,
              cfg: SolverConfig) -> float:
    """Penalized objective cost(D a, y) + lam * ||a||_1 (data term only for L0)."""
    return cost(obs, d @ alpha) + _penalty(cfg.regularizer, alpha)


def consistency_level(d: np.ndarray, alpha: np.ndarray, obs: Observation) -> float:
    """Data term cost(D a, y) of the current code."""
    return cost(obs, d @ alpha)


def sparse_code_fixed(d: np.ndarray, obs: Observation, alpha0: np.ndarray,
                      cfg: SolverConfig) -> tuple[np.ndarray, SolveTrace]:
    """Proximal gradient descent at a fixed regularization level.

    Iterates until the relative objective change drops below cfg.rel_tol or
    cfg.max_iters is hit.  With accelerate=True the momentum scheme of fast
    proximal methods is used; it converges faster but gives up per-iteration
    monotonicity.
    """
    alpha = np.array(alpha0, dtype=float)
    if alpha.ndim != 1 or alpha.shape[0] != d.shape[1]:
        raise ValueError("alpha0 length must match the dictionary atom count")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha0 must be finite")
    mu = _resolve_step(cfg, d)
    reg = cfg.regularizer

    za = d @ alpha
    pa = _project_onto_feasibility(obs, za)
    f = 0.5 * float(np.sum((za - pa) ** 2)) + _penalty(reg, alpha)
    objectives = [f]

    w, zw, pw = alpha, za, pa  # gradient evaluation point (= alpha when plain)
    t = 1.0
    converged = False
    iterations = 0
    for k in range(1, cfg.max_iters + 1):
        alpha_new = _prox(reg, w + mu * (d.T @ (pw - zw)), mu)
        za_new = d @ alpha_new
        pa_new = _project_onto_feasibility(obs, za_new)
        f_new = 0.5 * float(np.sum((za_new - pa_new) ** 2)) + _penalty(reg, alpha_new)
        if not np.isfinite(f_new):
            raise DivergenceError(f"objective diverged at iteration {k}")
        objectives.append(f_new)
        iterations = k
        if cfg.accelerate:
            t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
            c = (t - 1.0) / t_new
            w = alpha_new + c * (alpha_new - alpha)
            zw = za_new + c * (za_new - za)
            pw = _project_onto_feasibility(obs, zw)
            t = t_new
        else:
            w, zw, pw = alpha_new, za_new, pa_new
        alpha, za = alpha_new, za_new
        if abs(f - f_new) <= cfg.rel_tol * max(f, 1e-300):
            converged = True
            f = f_new
            break
        f = f_new

    pa = _project_onto_feasibility(obs, za)
    consistency = 0.5 * float(np.sum((za - pa) ** 2))
    trace = SolveTrace(np.asarray(objectives), iterations, converged, consistency)
    return alpha, trace


def _auto_lam0(d: np.ndarray, obs: Observation) -> float:
    zero = np.zeros(d.shape[0])
    lam = float(np.max(np.abs(d.T @ _project_onto_feasibility(obs, zero))))
    if lam == 0.0 and not isinstance(obs.model, GeneralLinear):
        # degenerate for one-sided sets (the origin is always feasible for
        # 1-bit data); substitute the raw observation for the projection
        lam = float(np.max(np.abs(d.T @ obs.values)))
    return lam if lam > 0.0 else 1.0


def sparse_code_adaptive(d: np.ndarray, obs: Observation, alpha0: np.ndarray,
                         hcfg: HomotopyConfig) -> tuple[np.ndarray, SolveTrace]:
    """Warm-started homotopy over decreasing lam until consistency <= epsilon.

    Each stage runs :func:`sparse_code_fixed` to convergence at the current
    lam, starting from the previous stage's code.  If max_stages is exhausted
    before the consistency target is met, the last iterate is returned with
    converged=False.
    """
    alpha = np.array(alpha0, dtype=float)
    lam = hcfg.lam0 if hcfg.lam0 is not None else _auto_lam0(d, obs)
    stages: List[StageRecord] = []
    objectives: List[float] = []
    total_iters = 0
    converged = False
    for _ in range(hcfg.max_stages):
        if consistency_level(d, alpha, obs) <= hcfg.epsilon:
            converged = True
            break
        cfg_k = replace(hcfg.inner, regularizer=L1(lam))
        alpha, tr = sparse_code_fixed(d, obs, alpha, cfg_k)
        psi = float(np.sum(np.abs(alpha)))
        stages.append(StageRecord(lam, tr.consistency, psi, tr.iterations))
        objectives.extend(tr.objectives.tolist())
        total_iters += tr.iterations
        lam *= hcfg.decay
    final = consistency_level(d, alpha, obs)
    if not converged:
        converged = final <= hcfg.epsilon
    trace = SolveTrace(np.asarray(objectives), total_iters, converged, final, stages)
    return alpha, trace


# ---------------------------------------------------------------------------
# batched solving across many observations (shared dictionary)


class _BoxProjectorBatch:
    """Stacked per-sample intervals for T observations; projects (N, T) arrays."""

    def __init__(self, interval_sets):
        self.lower = np.stack([iv.lower for iv in interval_sets], axis=1)
        self.upper = np.stack([iv.upper for iv in interval_sets], axis=1)
        self.lower_bounded = np.stack([iv.lower_bounded for iv in interval_sets], axis=1)
        self.upper_bounded = np.stack([iv.upper_bounded for iv in interval_sets], axis=1)

    def project(self, z: np.ndarray) -> np.ndarray:
        out = np.where(self.lower_bounded, np.maximum(z, self.lower), z)
        return np.where(self.upper_bounded, np.minimum(out, self.upper), out)


class _LinearProjectorBatch:
    def __init__(self, observations):
        self.observations = list(observations)
        first = self.observations[0]
        self.shared = all(o.model is first.model for o in self.observations)
        if self.shared:
            self.model = first.model
            self.values = np.stack([o.values for o in self.observations], axis=1)
            self._cache = first._cache

    def project(self, z: np.ndarray) -> np.ndarray:
        if self.shared:
            m = self.model.matrix
            from .measurements import _linear_gram

            gram = _linear_gram(self.model, self._cache)
            w = np.linalg.solve(gram, m @ z - self.values)
            return z - m.T @ w
        cols = [
            project_linear(o.model, o.values, z[:, t], _cache=o._cache)
            for t, o in enumerate(self.observations)
        ]
        return np.stack(cols, axis=1)


def batch_projector(observations: Sequence[Observation]):
    """Build a projector with ``project((N, T)) -> (N, T)`` for a batch."""
    obs = list(observations)
    if not obs:
        raise ValueError("need at least one observation")
    if isinstance(obs[0].model, GeneralLinear):
        return _LinearProjectorBatch(obs)
    return _BoxProjectorBatch([o.intervals() for o in obs])


def _batch_objective(reg: Regularizer, z: np.ndarray, p: np.ndarray,
                     a: np.ndarray) -> np.ndarray:
    data = 0.5 * np.sum((z - p) ** 2, axis=0)
    if isinstance(reg, L1):
        return data + reg.lam * np.sum(np.abs(a), axis=0)
    return data


def sparse_code_batch(d: np.ndarray, projector, a0: np.ndarray, cfg: SolverConfig,
                      step: Optional[float] = None,
                      stop_consistency: Optional[np.ndarray] = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Run the fixed-lam solver on T signals at once (columns of a0).

    Columns stop updating once their own relative objective change falls
    below cfg.rel_tol (or, when stop_consistency is given, once their data
    term drops below that per-column threshold).  Returns the codes and the
    per-iteration total objective.
    """
    a = np.array(a0, dtype=float)
    if a.ndim != 2 or a.shape[0] != d.shape[1]:
        raise ValueError("a0 must have shape (atom_count, T)")
    mu = step if step is not None else _resolve_step(cfg, d)
    reg = cfg.regularizer

    z = d @ a
    p = projector.project(z)
    fcols = _batch_objective(reg, z, p, a)
    totals = [float(fcols.sum())]
    active = np.ones(a.shape[1], dtype=bool)
    if stop_consistency is not None:
        active &= 0.5 * np.sum((z - p) ** 2, axis=0) > stop_consistency
    for k in range(1, cfg.max_iters + 1):
        if not active.any():
            break
        cand = _prox_cols(reg, a + mu * (d.T @ (p - z)), mu)
        a = np.where(active[None, :], cand, a)
        z = d @ a
        p = projector.project(z)
        fcols_new = _batch_objective(reg, z, p, a)
        if not np.all(np.isfinite(fcols_new[active])):
            raise DivergenceError(f"objective diverged at iteration {k}")
        totals.append(float(fcols_new.sum()))
        delta = np.abs(fcols - fcols_new)
        active &= delta > cfg.rel_tol * np.maximum(fcols, 1e-300)
        if stop_consistency is not None:
            active &= 0.5 * np.sum((z - p) ** 2, axis=0) > stop_consistency
        fcols = fcols_new
    return a, np.asarray(totals)


def _prox_cols(reg: Regularizer, a: np.ndarray, step: float) -> np.ndarray:
    if isinstance(reg, L1):
        return prox_l1(a, reg.lam * step)
    return prox_l0_topk(a, reg.k)
