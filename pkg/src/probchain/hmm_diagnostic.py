"""Does a classifier need the transition matrix at all?

Discrete-emission HMMs are scored with a scaled forward recursion.  The
necessity test classifies labelled sequences with the true models and
again after replacing every transition matrix with the uniform one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .sampling import Rand48

STOCHASTIC_TOL = 1e-12
PARSE_TOL = 1e-6


class ModelFormatError(ValueError):
    pass


def _check_stochastic(name: str, m: np.ndarray, tol: float) -> None:
    if np.any(m < 0):
        raise ValueError(f"{name} has negative entries")
    sums = m.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError(f"{name} rows must sum to 1 (got {np.round(sums, 15).tolist()})")


@dataclass(frozen=True)
class DiscreteHmm:
    A: np.ndarray  # (k, k) transitions
    B: np.ndarray  # (k, L) emissions
    pi: np.ndarray  # (k,) initial state distribution
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        pi = np.asarray(self.pi, dtype=np.float64)
        k = pi.shape[0]
        if A.shape != (k, k) or B.ndim != 2 or B.shape[0] != k:
            raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} pi{pi.shape}")
        _check_stochastic("A", A, STOCHASTIC_TOL)
        _check_stochastic("B", B, STOCHASTIC_TOL)
        _check_stochastic("pi", pi, STOCHASTIC_TOL)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "pi", pi)

    @property
    def k(self) -> int:
        return self.pi.shape[0]

    @property
    def L(self) -> int:
        return self.B.shape[1]


def two_step_transition(A: np.ndarray, i: int, j: int) -> float:
    """P(state j two steps after state i) = sum_r A[i, r] * A[r, j]."""
    A = np.asarray(A, dtype=np.float64)
    return math.fsum(A[i, r] * A[r, j] for r in range(A.shape[0]))


def forward_loglik(hmm: DiscreteHmm, sequence: Sequence[int], floor: float = 0.0) -> float:
    """log P(sequence | hmm) via the forward recursion with per-step normalization.

    ``floor`` substitutes a back-off constant for emission probabilities
    below it; 0 disables that.  Returns -inf for impossible sequences.
    """
    obs = np.asarray(sequence, dtype=np.int64)
    if obs.size == 0:
        raise ValueError("empty sequence")
    B = np.maximum(hmm.B, floor) if floor > 0 else hmm.B
    alpha = hmm.pi * B[:, obs[0]]
    loglik = 0.0
    for t in range(obs.size):
        if t:
            alpha = (alpha @ hmm.A) * B[:, obs[t]]
        c = alpha.sum()
        if c <= 0:
            return -math.inf
        loglik += math.log(c)
        alpha = alpha / c
    return loglik


def forward_loglik_batch(hmm: DiscreteHmm, sequences: np.ndarray) -> np.ndarray:
    """:func:`forward_loglik` for every row of an equal-length (count, T) array."""
    obs = np.asarray(sequences, dtype=np.int64)
    alpha = hmm.pi[None, :] * hmm.B[:, obs[:, 0]].T
    loglik = np.zeros(obs.shape[0])
    alive = np.ones(obs.shape[0], dtype=bool)
    for t in range(obs.shape[1]):
        if t:
            alpha = (alpha @ hmm.A) * hmm.B[:, obs[:, t]].T
        c = alpha.sum(axis=1)
        dead = c <= 0
        alive &= ~dead
        c = np.where(dead, 1.0, c)
        loglik += np.log(c)
        alpha = alpha / c[:, None]
    loglik[~alive] = -np.inf
    return loglik


@dataclass
class SequenceDataset:
    sequences: np.ndarray  # (count, length) int
    labels: np.ndarray  # (count,) int


def _categorical(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cdf_rows: (count, m) cumulative rows; first index whose cdf exceeds u.
    idx = (cdf_rows <= u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def generate(hmm: DiscreteHmm, length: int, count: int, rng: Rand48, label: int = 0) -> SequenceDataset:
    """``count`` i.i.d. sequences of ``length`` symbols.

    Per time step the stream gives one state draw per sequence, then one
    emission draw per sequence.
    """
    if length < 1 or count < 0:
        raise ValueError("length must be >= 1 and count >= 0")
    cdf_pi = np.cumsum(hmm.pi)
    cdf_A = np.cumsum(hmm.A, axis=1)
    cdf_B = np.cumsum(hmm.B, axis=1)
    seqs = np.empty((count, length), dtype=np.int64)
    state = _categorical(np.broadcast_to(cdf_pi, (count, hmm.k)), rng.uniforms(count))
    for t in range(length):
        if t:
            state = _categorical(cdf_A[state], rng.uniforms(count))
        seqs[:, t] = _categorical(cdf_B[state], rng.uniforms(count))
    return SequenceDataset(seqs, np.full(count, label, dtype=np.int64))


def concat(datasets: Sequence[SequenceDataset]) -> SequenceDataset:
    return SequenceDataset(
        np.concatenate([d.sequences for d in datasets]), np.concatenate([d.labels for d in datasets])
    )


def flatten_transitions(hmm: DiscreteHmm) -> DiscreteHmm:
    """Same model with every transition probability set to 1/k."""
    k = hmm.k
    return DiscreteHmm(np.full((k, k), 1.0 / k), hmm.B, hmm.pi, hmm.name)


def classify(models: Sequence[DiscreteHmm], sequences: np.ndarray) -> np.ndarray:
    """Index of the highest-likelihood model per sequence; ties go to the lowest index."""
    scores = np.stack([forward_loglik_batch(m, sequences) for m in models], axis=1)
    return np.argmax(scores, axis=1)


@dataclass
class NecessityReport:
    model_set: str
    accuracy_true: float
    accuracy_flat: float
    sequences: int = 0

    @property
    def drop(self) -> float:
        return self.accuracy_true - self.accuracy_flat


def markov_necessity_test(
    models: Sequence[DiscreteHmm], data: SequenceDataset, model_set: str = "models"
) -> NecessityReport:
    """Accuracy with the true models versus with flattened transition matrices."""
    if len(models) < 2:
        raise ValueError("need at least two class models")
    flat = [flatten_transitions(m) for m in models]
    acc_true = float(np.mean(classify(models, data.sequences) == data.labels))
    acc_flat = float(np.mean(classify(flat, data.sequences) == data.labels))
    return NecessityReport(model_set, acc_true, acc_flat, len(data.labels))


# -- model files ---------------------------------------------------------------
#
#   # comment
#   k L
#   pi_1 ... pi_k
#   A row 1 ... A row k
#   B row 1 ... B row k


def format_hmm(hmm: DiscreteHmm) -> str:
    def row(v) -> str:
        return " ".join(repr(float(x)) for x in v)

    lines = [f"{hmm.k} {hmm.L}", row(hmm.pi)]
    lines += [row(r) for r in hmm.A]
    lines += [row(r) for r in hmm.B]
    return "\n".join(lines) + "\n"


def parse_hmm(text: str, name: str = "") -> DiscreteHmm:
    rows = []
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            rows.append(ln.split())
    if not rows or len(rows[0]) != 2:
        raise ModelFormatError("first line must hold k and L")
    try:
        k, L = int(rows[0][0]), int(rows[0][1])
        values = [[float(x) for x in r] for r in rows[1:]]
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    if k < 1 or L < 1:
        raise ModelFormatError("k and L must be positive")
    if len(values) != 1 + 2 * k:
        raise ModelFormatError(f"expected {1 + 2 * k} rows after the header, got {len(values)}")
    widths = [k] + [k] * k + [L] * k
    for i, (r, w) in enumerate(zip(values, widths)):
        if len(r) != w:
            raise ModelFormatError(f"row {i + 2} has {len(r)} numbers, expected {w}")
    pi = np.array(values[0])
    A = np.array(values[1 : 1 + k])
    B = np.array(values[1 + k :])
    for label, m in (("pi", pi), ("A", A), ("B", B)):
        try:
            _check_stochastic(label, m, PARSE_TOL)
        except ValueError as exc:
            raise ModelFormatError(str(exc)) from None
    # Decimal text rarely sums to 1 exactly; renormalize once validated.
    pi = pi / pi.sum()
    A = A / A.sum(axis=1, keepdims=True)
    B = B / B.sum(axis=1, keepdims=True)
    return DiscreteHmm(A, B, pi, name)


def load_hmm(path: str | Path) -> DiscreteHmm:
    path = Path(path)
    return parse_hmm(path.read_text(encoding="utf-8"), path.stem)


# -- ready-made model sets -------------------------------------------------------


def cycle_models(k: int = 3) -> list[DiscreteHmm]:
    """Two deterministic cycles over the same symbols, opposite directions.

    Both emit every symbol equally often, so only the order tells them apart.
    """
    eye = np.eye(k)
    forward = np.roll(eye, 1, axis=1)
    backward = np.roll(eye, -1, axis=1)
    pi = np.full(k, 1.0 / k)
    return [DiscreteHmm(forward, eye, pi, "cycle-forward"), DiscreteHmm(backward, eye, pi, "cycle-backward")]


def emission_models(k: int = 3, L: int = 6, seed: int = 0) -> list[DiscreteHmm]:
    """Two models with uniform transitions that differ only in their emissions."""
    rng = np.random.default_rng(seed)
    A = np.full((k, k), 1.0 / k)
    pi = np.full(k, 1.0 / k)
    out = []
    for c in range(2):
        B = rng.dirichlet(np.full(L, 0.5), size=k)
        out.append(DiscreteHmm(A, B, pi, f"emission-{c}"))
    return out


def mixed_models(k: int = 3, L: int = 6, seed: int = 0) -> list[DiscreteHmm]:
    """Two models differing in both transitions and emissions."""
    rng = np.random.default_rng(seed)
    pi = np.full(k, 1.0 / k)
    out = []
    for c in range(2):
        A = rng.dirichlet(np.full(k, 0.3), size=k)
        B = rng.dirichlet(np.full(L, 1.0), size=k)
        out.append(DiscreteHmm(A, B, pi, f"mixed-{c}"))
    return out


SCENARIOS = {"cycle": cycle_models, "emission": emission_models, "mixed": mixed_models}


@dataclass
class ScenarioRun:
    models: list[DiscreteHmm]
    data: SequenceDataset
    report: NecessityReport
    extra: dict = field(default_factory=dict)


def run_scenario(
    models: Sequence[DiscreteHmm], name: str, sequences: int, length: int, rng: Rand48
) -> ScenarioRun:
    """Generate ``sequences`` test sequences split evenly over the models and test them."""
    per_model = [sequences // len(models) + (1 if c < sequences % len(models) else 0) for c in range(len(models))]
    data = concat([generate(m, length, n, rng, label=c) for c, (m, n) in enumerate(zip(models, per_model))])
    return ScenarioRun(list(models), data, markov_necessity_test(models, data, name))
