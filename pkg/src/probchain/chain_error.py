"""Relative error of probability products under additive estimation noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .parallel import map_units
from .sampling import NoiseFamily, NoiseSpec, Rand48, derive_seed

WIDE = np.longdouble

# Appendix-table grid.
TABLE_AMPLITUDES = tuple(round(0.01 * k, 2) for k in range(31))
TABLE_CHAIN_LENGTHS = tuple(range(1, 40, 2))

# Keeps one block of uniforms (rows x 2n) around a few MB.
_ROW_BUDGET = 1 << 19


class ChainProduct(NamedTuple):
    log: float
    direct: np.longdouble


@dataclass(frozen=True)
class ChainSpec:
    n: int
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    samples: int = 100_000
    repetitions: int = 20
    amplitude_step: float = 0.01
    amplitude_count: int = 100

    def __post_init__(self):
        if self.n < 1 or self.samples < 1 or self.repetitions < 1:
            raise ValueError("n, samples and repetitions must all be >= 1")
        if self.amplitude_count < 1 or self.amplitude_step < 0:
            raise ValueError("amplitude grid must be non-empty with step >= 0")

    def amplitudes(self) -> list[float]:
        return [round(k * self.amplitude_step, 12) for k in range(self.amplitude_count)]


@dataclass
class ErrorCurve:
    family: NoiseFamily
    truncated: bool
    n: int
    amplitudes: list[float]
    rel_errors: list[float]
    stderrs: list[float]

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.amplitudes, self.rel_errors))


@dataclass
class ErrorTable:
    family: NoiseFamily
    truncated: bool
    amplitudes: list[float]
    chain_lengths: list[int]
    raw: np.ndarray  # shape (len(amplitudes), len(chain_lengths))
    stderr: np.ndarray

    @property
    def cells(self) -> np.ndarray:
        return np.vectorize(round_half_away)(self.raw)

    def cell(self, e: float, n: int) -> float:
        i = self.amplitudes.index(round(e, 2))
        j = self.chain_lengths.index(n)
        return float(self.cells[i, j])

    def format(self) -> str:
        head = "e \\  n" + "".join(f"{n:4d}" for n in self.chain_lengths)
        lines = [head, ""]
        for e, row in zip(self.amplitudes, self.cells):
            lines.append(f"{e:4.2f}  " + " ".join(f"{v:3.1f}" for v in row))
        return "\n".join(lines) + "\n"


def round_half_away(x: float, digits: int = 1) -> float:
    scale = 10**digits
    return math.copysign(math.floor(abs(x) * scale + 0.5) / scale, x)


def product_true(p: Sequence[float]) -> ChainProduct:
    """Log of the product (authoritative) and the extended-precision product."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.any(arr == 0):
        log = -math.inf
    else:
        log = math.fsum(np.log(arr))
    return ChainProduct(log, np.prod(arr.astype(WIDE)))


def perturb(p: np.ndarray, noise: NoiseSpec, rng: Rand48) -> np.ndarray:
    """``p + eps`` in extended precision, clamped when the noise is truncated."""
    eps = noise.draw(rng, p.size).reshape(p.shape)
    q = p.astype(WIDE) + eps.astype(WIDE)
    if noise.truncated:
        np.clip(q, 0, 1, out=q)
    return q


def product_perturbed(p: Sequence[float], noise: NoiseSpec, rng: Rand48) -> np.longdouble:
    arr = np.asarray(p, dtype=np.float64)
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.prod(perturb(arr, noise, rng))


def analytic_rel_error(P: float, eps: float, n: int) -> float:
    """``|1 - (1 + eps/P)^n|`` for a constant chain ``P^n`` with a fixed error."""
    if P == 0:
        raise ValueError("relative error is undefined for P = 0")
    return abs(1.0 - (1.0 + eps / P) ** n)


def _ratio_of_sums(n: int, noise: NoiseSpec, samples: int, seed: int) -> float:
    """One repetition: sum|p_true - p_measured| / sum p_true over ``samples`` chains.

    For uniform noise each chain consumes n probabilities then n noise
    draws from one stream, the same order as the reference C program.
    """
    rng = Rand48(seed)
    rows_per_block = max(1, _ROW_BUDGET // (2 * n))
    sumd = WIDE(0)
    total = WIDE(0)
    done = 0
    while done < samples:
        rows = min(rows_per_block, samples - done)
        if noise.family is NoiseFamily.UNIFORM:
            u = rng.uniforms(rows * 2 * n).reshape(rows, 2 * n)
            p = u[:, :n]
            eps = 2.0 * noise.amplitude * (u[:, n:] - 0.5)
        else:
            p = rng.uniforms(rows * n).reshape(rows, n)
            eps = noise.draw(rng, rows * n).reshape(rows, n)
        pw = p.astype(WIDE)
        q = pw + eps.astype(WIDE)
        if noise.truncated:
            np.clip(q, 0, 1, out=q)
        target = np.prod(pw, axis=1)
        measured = np.prod(q, axis=1)
        sumd += np.sum(np.abs(target - measured))
        total += np.sum(target)
        done += rows
    return float(sumd / total)


def _unit(args: tuple) -> float:
    return _ratio_of_sums(*args)


def unit_seed(seed: int, noise: NoiseSpec, n: int, amplitude: float, rep: int) -> int:
    return derive_seed(seed, "chain", noise.label, n, f"{amplitude:.6f}", rep)


def _summarize(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def _grid(
    noise: NoiseSpec,
    amplitudes: Sequence[float],
    chain_lengths: Sequence[int],
    samples: int,
    repetitions: int,
    seed: int,
    jobs: int,
) -> tuple[np.ndarray, np.ndarray]:
    units, keys = [], []
    for i, e in enumerate(amplitudes):
        cell_noise = noise.with_amplitude(e)
        for j, n in enumerate(chain_lengths):
            for r in range(repetitions):
                units.append((n, cell_noise, samples, unit_seed(seed, noise, n, e, r)))
                keys.append((i, j))
    values = map_units(_unit, units, jobs)
    mean = np.zeros((len(amplitudes), len(chain_lengths)))
    se = np.zeros_like(mean)
    by_cell: dict[tuple[int, int], list[float]] = {}
    for key, v in zip(keys, values):
        by_cell.setdefault(key, []).append(v)
    for (i, j), vals in by_cell.items():
        mean[i, j], se[i, j] = _summarize(vals)
    return mean, se


def relative_error_mc(spec: ChainSpec, seed: int = 0, jobs: int = 1) -> ErrorCurve:
    """Monte-Carlo relative-error curve over ``spec.amplitudes()``.

    Each repetition estimates sum|p_true - p_measured| / sum p_true; the
    curve value is the mean over repetitions.
    """
    amps = spec.amplitudes()
    mean, se = _grid(spec.noise, amps, [spec.n], spec.samples, spec.repetitions, seed, jobs)
    return ErrorCurve(
        spec.noise.family, spec.noise.truncated, spec.n, amps, mean[:, 0].tolist(), se[:, 0].tolist()
    )


def appendix_table(
    noise: NoiseSpec,
    samples: int = 100_000,
    repetitions: int = 20,
    seed: int = 0,
    jobs: int = 1,
    amplitudes: Sequence[float] = TABLE_AMPLITUDES,
    chain_lengths: Sequence[int] = TABLE_CHAIN_LENGTHS,
) -> ErrorTable:
    """Relative-error table over amplitude e x chain length n, one decimal per cell."""
    mean, se = _grid(noise, amplitudes, chain_lengths, samples, repetitions, seed, jobs)
    return ErrorTable(noise.family, noise.truncated, list(amplitudes), list(chain_lengths), mean, se)


def parse_table_text(text: str) -> tuple[list[float], list[int], np.ndarray]:
    """Read a table in the layout produced by :meth:`ErrorTable.format`."""
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    header = rows[0]
    ns = [int(tok) for tok in header if tok.isdigit()]
    amps, cells = [], []
    for row in rows[1:]:
        amps.append(float(row[0]))
        cells.append([float(v) for v in row[1:]])
    return amps, ns, np.array(cells)
