"""Dictionary learning from nonlinearly measured signals.

Alternates consistent sparse coding of every training observation with
projected gradient descent on the dictionary under the column-norm
constraint ||d_i||_2 <= 1.  The dictionary step for codes A = [a_1 ... a_T]
is

    D <- proj_norm( D + mu2 * sum_t (proj_t(D a_t) - D a_t) a_t^T ),

with mu2 = 1 / ||A||_2^2; both step sizes are re-estimated at every outer
iteration from the current D and A.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .linops import spectral_norm
from .measurements import Observation
from .solvers import (
    L1,
    SolverConfig,
    _batch_objective,
    batch_projector,
    sparse_code_batch,
)

__all__ = [
    "DictLearnConfig",
    "TrainingSet",
    "LearnTrace",
    "project_dictionary",
    "dict_update",
    "learn",
    "save_dictionary",
    "load_dictionary",
    "export_dictionary_text",
]

logger = logging.getLogger(__name__)

COLUMN_NORM_SLACK = 1e-12


@dataclass(frozen=True)
class DictLearnConfig:
    inner_code: SolverConfig
    outer_iters: int = 50
    inner_dict_iters: int = 20
    dict_step: Optional[float] = None  # None -> 1 / ||A||_2^2
    seed: int = 0  # reserved for randomized initialization strategies

    def __post_init__(self):
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be >= 0")
        if self.inner_dict_iters < 1:
            raise ValueError("inner_dict_iters must be >= 1")
        if self.dict_step is not None and not self.dict_step > 0:
            raise ValueError("dict_step must be positive")


@dataclass(eq=False)
class TrainingSet:
    """Observations measured through one model family, plus optional clean
    references that are used for evaluation only and never by the learner."""

    observations: List[Observation]
    references: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.observations:
            raise ValueError("training set must contain at least one observation")
        first = self.observations[0]
        for o in self.observations:
            if type(o.model) is not type(first.model):
                raise ValueError("observations must share one measurement model family")
            if o.values.shape != first.values.shape:
                raise ValueError("observations must share one signal length")

    def __len__(self) -> int:
        return len(self.observations)


@dataclass
class LearnTrace:
    """Total objective after each half step of the alternation."""

    after_coding: List[float] = field(default_factory=list)
    after_dict: List[float] = field(default_factory=list)
    outer_iters: int = 0


def project_dictionary(d: np.ndarray) -> np.ndarray:
    """Rescale each column onto the unit l2 ball: d_i / max(||d_i||, 1)."""
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("dictionary must be finite")
    norms = np.linalg.norm(d, axis=0)
    return d / np.maximum(norms, 1.0)


def _as_code_matrix(codes, atom_count: int) -> np.ndarray:
    a = np.asarray(codes, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    elif a.ndim != 2:
        # a sequence of per-signal code vectors
        a = np.stack([np.asarray(c, dtype=float) for c in codes], axis=1)
    if a.shape[0] != atom_count:
        raise ValueError("codes must have one row per dictionary atom")
    return a


def dict_update(d: np.ndarray, codes, train: TrainingSet, cfg: DictLearnConfig,
                record_objective: bool = False):
    """Projected gradient steps on the summed data cost with codes fixed.

    Returns the updated dictionary; with record_objective=True also returns
    the total data cost before the first and after every inner step.
    """
    d = np.asarray(d, dtype=float)
    a = _as_code_matrix(codes, d.shape[1])
    if a.shape[1] != len(train):
        raise ValueError("need one code per training observation")
    projector = batch_projector(train.observations)
    mu2 = cfg.dict_step
    if mu2 is None:
        s = spectral_norm(a)
        if s == 0.0:
            # all-zero codes: the gradient vanishes, nothing to update
            if record_objective:
                obj = _total_data_cost(d, a, projector)
                return d.copy(), np.full(cfg.inner_dict_iters + 1, obj)
            return d.copy()
        mu2 = 1.0 / (s * s)

    objectives = []
    if record_objective:
        objectives.append(_total_data_cost(d, a, projector))
    for _ in range(cfg.inner_dict_iters):
        z = d @ a
        e = projector.project(z) - z
        d = project_dictionary(d + mu2 * (e @ a.T))
        if not np.all(np.isfinite(d)):
            raise RuntimeError("dictionary update diverged")
        if record_objective:
            objectives.append(_total_data_cost(d, a, projector))
    if record_objective:
        return d, np.asarray(objectives)
    return d


def _total_data_cost(d: np.ndarray, a: np.ndarray, projector) -> float:
    z = d @ a
    r = z - projector.project(z)
    return 0.5 * float(np.sum(r * r))


def _total_objective(d, a, projector, reg) -> float:
    z = d @ a
    p = projector.project(z)
    return float(np.sum(_batch_objective(reg, z, p, a)))


def learn(train: TrainingSet, d0: np.ndarray, cfg: DictLearnConfig,
          init_codes=None) -> tuple[np.ndarray, np.ndarray, LearnTrace]:
    """Alternating consistent sparse coding and dictionary updates.

    Codes are warm-started from the previous outer iteration (column t of
    the returned (M, T) array codes signal t).  Atoms that no training code
    ever activates are left untouched and reported through a warning.
    """
    d = np.asarray(d0, dtype=float)
    norms = np.linalg.norm(d, axis=0)
    if np.any(norms > 1.0 + COLUMN_NORM_SLACK):
        raise ValueError("initial dictionary violates the unit column-norm constraint")

    t_count = len(train)
    if init_codes is None:
        a = np.zeros((d.shape[1], t_count))
    else:
        a = _as_code_matrix(init_codes, d.shape[1]).copy()
        if a.shape[1] != t_count:
            raise ValueError("need one initial code per training observation")

    projector = batch_projector(train.observations)
    reg = cfg.inner_code.regularizer
    trace = LearnTrace()
    for _ in range(cfg.outer_iters):
        step = cfg.inner_code.step
        if step is None:
            s = spectral_norm(d)
            step = 1.0 / (s * s) if s > 0 else 1.0
        a, _ = sparse_code_batch(d, projector, a, cfg.inner_code, step=step)
        trace.after_coding.append(_total_objective(d, a, projector, reg))

        d = dict_update(d, a, train, cfg)
        trace.after_dict.append(_total_objective(d, a, projector, reg))
        trace.outer_iters += 1

    unused = np.flatnonzero(~np.any(a != 0.0, axis=1))
    if unused.size:
        logger.warning("%d atoms were never activated and were left as-is: %s",
                       unused.size, unused.tolist())
    return d, a, trace


# ---------------------------------------------------------------------------
# serialization

DICT_MAGIC = b"NLCSDICT"
DICT_VERSION = 1


def save_dictionary(path, d: np.ndarray) -> None:
    """Write a dictionary as magic, version/N/M header, column-major f64 LE."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise ValueError("dictionary must be 2-d")
    n, m = d.shape
    with open(path, "wb") as fh:
        fh.write(DICT_MAGIC)
        fh.write(struct.pack("<III", DICT_VERSION, n, m))
        fh.write(np.ascontiguousarray(d.T).astype("<f8").tobytes())


def load_dictionary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != DICT_MAGIC:
            raise ValueError(f"not a dictionary container (magic {magic!r})")
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError("truncated dictionary header")
        version, n, m = struct.unpack("<III", header)
        if version != DICT_VERSION:
            raise ValueError(f"unsupported dictionary version {version}")
        payload = fh.read()
    expected = 8 * n * m
    if len(payload) != expected:
        raise ValueError(f"dictionary payload has {len(payload)} bytes, expected {expected}")
    cols = np.frombuffer(payload, dtype="<f8").reshape(m, n)
    return np.array(cols.T, dtype=float)


def export_dictionary_text(path, d: np.ndarray) -> None:
    """Plain-text export for inspection: one column per line, space-separated."""
    d = np.asarray(d, dtype=float)
    with open(path, "w") as fh:
        for col in d.T:
            fh.write(" ".join(f"{v:.17g}" for v in col))
            fh.write("\n")
