"""Synthetic lexical search: does the max-product path survive noisy probabilities?

A balanced tree of depth ``d`` and fan-out ``b`` gets a random probability on
every edge.  The root-to-leaf path with the largest product is the target;
every other path is a distractor.  Each trial nudges all edge probabilities
by bipolar uniform noise and checks whether the argmax path is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .parallel import map_units
from .sampling import INCREMENT, MASK, MODULUS, MULTIPLIER, Rand48, derive_seed

DEFAULT_PATH_BUDGET = 10**7
# Upper bound on trial-rows x paths held in memory at once.
_CELL_BUDGET = 1 << 22

PAPER_DEPTHS = (3, 5, 7, 9)
PAPER_BREADTHS = (2, 3, 4, 5, 6)
PAPER_EPS = (0.01, 0.02, 0.04, 0.08, 0.16, 0.32)


@dataclass
class LetterTree:
    depth: int
    breadth: int
    levels: list[np.ndarray]  # level l holds b**(l+1) edge probabilities, lexicographic

    @property
    def path_count(self) -> int:
        return self.breadth**self.depth

    @property
    def edge_count(self) -> int:
        return sum(lv.size for lv in self.levels)

    def flat_edges(self) -> np.ndarray:
        return np.concatenate(self.levels)

    def path_index(self, path: Sequence[int]) -> int:
        idx = 0
        for c in path:
            idx = idx * self.breadth + c
        return idx

    def path_of(self, index: int) -> tuple[int, ...]:
        digits = []
        for _ in range(self.depth):
            index, c = divmod(index, self.breadth)
            digits.append(c)
        return tuple(reversed(digits))


def generate_tree(d: int, b: int, rng: Rand48, path_budget: int = DEFAULT_PATH_BUDGET) -> LetterTree:
    if d < 1 or b < 2:
        raise ValueError(f"need depth >= 1 and breadth >= 2, got d={d}, b={b}")
    if b**d > path_budget:
        raise ValueError(f"{b}^{d} = {b**d} paths exceeds the path budget {path_budget}")
    levels = []
    for level in range(1, d + 1):
        u = rng.uniforms(b**level)
        # drand48 can return exactly 0 (probability 2^-48); keep edges in (0, 1).
        u[u == 0.0] = 0.5 / 2**48
        levels.append(u)
    return LetterTree(d, b, levels)


def path_products(levels: Sequence[np.ndarray], b: int, dtype=np.float64) -> np.ndarray:
    """Products along all root-to-leaf paths.

    ``levels[l]`` has shape (rows, b**(l+1)); the result has shape
    (rows, b**d), ordered lexicographically by path.
    """
    prod = np.asarray(levels[0], dtype=dtype)
    for lv in levels[1:]:
        rows, width = prod.shape
        prod = (prod[:, :, None] * np.asarray(lv, dtype=dtype).reshape(rows, width, b)).reshape(rows, -1)
    return prod


def path_log_scores(tree: LetterTree) -> np.ndarray:
    score = np.log(tree.levels[0])
    for lv in tree.levels[1:]:
        score = (score[:, None] + np.log(lv).reshape(score.size, tree.breadth)).ravel()
    return score


def target_path(tree: LetterTree) -> tuple[int, ...]:
    """Path maximizing the sum of log edge probabilities; ties go to the smallest path."""
    return tree.path_of(int(np.argmax(path_log_scores(tree))))


@dataclass
class TrialResult:
    trials: int
    correct: int
    negative_trials: int

    @property
    def f_measure(self) -> float:
        """(precision + recall) / 2 with paths as classes, micro-averaged.

        Every miss is one false negative for the target and one false
        positive for the chosen distractor, so both equal correct / trials.
        """
        precision = recall = self.correct / self.trials
        return 0.5 * (precision + recall)

    @property
    def negative_fraction(self) -> float:
        return self.negative_trials / self.trials


@numba.njit(cache=True)
def _trials_kernel(truth, b, d, eps, trials, state, target):
    # Fused rand48 + perturbation + running argmax; same stream order and
    # float64 arithmetic as perturb_and_classify_reference.
    mul = np.uint64(MULTIPLIER)
    inc = np.uint64(INCREMENT)
    mask = np.uint64(MASK)
    scale = 1.0 / MODULUS
    two_eps = 2.0 * eps
    width = b ** (d - 1)
    prefix = np.empty(width)
    nxt = np.empty(width)
    correct = 0
    negative = 0
    for _ in range(trials):
        neg = False
        prefix[0] = 1.0
        size = 1
        off = 0
        for level in range(d - 1):
            for j in range(size):
                pj = prefix[j]
                for c in range(b):
                    state = (mul * state + inc) & mask
                    v = truth[off + j * b + c] + (state * scale - 0.5) * two_eps
                    if v < 0.0:
                        neg = True
                    nxt[j * b + c] = pj * v
            off += size * b
            size *= b
            prefix, nxt = nxt, prefix
        best = -np.inf
        best_idx = -1
        for j in range(size):
            pj = prefix[j]
            for c in range(b):
                state = (mul * state + inc) & mask
                v = truth[off + j * b + c] + (state * scale - 0.5) * two_eps
                if v < 0.0:
                    neg = True
                score = pj * v
                if score > best:
                    best = score
                    best_idx = j * b + c
        if best_idx == target:
            correct += 1
        if neg:
            negative += 1
    return correct, negative, state


def perturb_and_classify(tree: LetterTree, eps: float, trials: int, rng: Rand48) -> TrialResult:
    """Run ``trials`` noisy copies of the tree and count preserved argmax paths.

    Perturbed values are not clamped and may go negative; paths are scored
    by their signed product.  Each trial consumes one bipolar draw per
    edge, level by level in lexicographic order.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    target = int(np.argmax(path_log_scores(tree)))
    correct, negative, state = _trials_kernel(
        tree.flat_edges(), tree.breadth, tree.depth, float(eps), trials, np.uint64(rng.state), target
    )
    rng.state = int(state)
    return TrialResult(trials, int(correct), int(negative))


def perturb_and_classify_reference(
    tree: LetterTree, eps: float, trials: int, rng: Rand48, dtype=np.float64
) -> TrialResult:
    """Array version of :func:`perturb_and_classify` that enumerates every path."""
    target = int(np.argmax(path_log_scores(tree)))
    sizes = [lv.size for lv in tree.levels]
    bounds = np.cumsum([0] + sizes)
    truth = tree.flat_edges()
    rows_per_chunk = max(1, _CELL_BUDGET // tree.path_count)
    correct = negative = 0
    done = 0
    while done < trials:
        rows = min(rows_per_chunk, trials - done)
        noisy = truth[None, :] + rng.bipolar(eps, rows * truth.size).reshape(rows, truth.size)
        negative += int(np.count_nonzero((noisy < 0).any(axis=1)))
        levels = [noisy[:, bounds[i] : bounds[i + 1]] for i in range(len(sizes))]
        pred = np.argmax(path_products(levels, tree.breadth, dtype), axis=1)
        correct += int(np.count_nonzero(pred == target))
        done += rows
    return TrialResult(trials, correct, negative)


@dataclass
class SweepTable:
    depths: list[int]
    breadths: list[int]
    eps_values: list[float]
    models: int
    trials: int
    # (d, b, model) -> per-eps F in percent
    per_model: dict[tuple[int, int, int], list[float]] = field(default_factory=dict)
    negative: dict[tuple[int, int, int], list[float]] = field(default_factory=dict)
    skipped: list[tuple[int, int]] = field(default_factory=list)

    def _values(self, depth: int | None, k: int) -> np.ndarray:
        return np.array(
            [v[k] for (d, _, _), v in sorted(self.per_model.items()) if depth is None or d == depth]
        )

    def cell(self, depth: int, eps: float) -> tuple[float, float]:
        """Mean and sd (percent) of F over all breadths and models at this depth."""
        vals = self._values(depth, self.eps_values.index(eps))
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    def stderr(self, depth: int, eps: float) -> float:
        vals = self._values(depth, self.eps_values.index(eps))
        return float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0

    def column_mean(self, eps: float) -> tuple[float, float]:
        vals = self._values(None, self.eps_values.index(eps))
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    def negative_fraction(self, depth: int, eps: float) -> float:
        k = self.eps_values.index(eps)
        vals = [v[k] for (d, _, _), v in sorted(self.negative.items()) if d == depth]
        return float(np.mean(vals))

    def rows(self) -> list[tuple[int, float, float, float, float]]:
        """(d, eps, mean_F_percent, sd_percent, negative_fraction) per cell."""
        out = []
        for d in self.depths:
            if not any(key[0] == d for key in self.per_model):
                continue
            for eps in self.eps_values:
                mean, sd = self.cell(d, eps)
                out.append((d, eps, mean, sd, self.negative_fraction(d, eps)))
        return out

    def format(self) -> str:
        head = "D \\ eps " + "".join(f"{e:>8g}{'sd':>6}" for e in self.eps_values)
        lines = [head]
        for d in self.depths:
            if not any(key[0] == d for key in self.per_model):
                continue
            cells = "".join(f"{m:8.1f}{s:6.1f}" for m, s in (self.cell(d, e) for e in self.eps_values))
            lines.append(f"D={d:<6d}" + cells)
        cells = "".join(f"{m:8.1f}{s:6.1f}" for m, s in (self.column_mean(e) for e in self.eps_values))
        lines.append(f"{'m':<8s}" + cells)
        if self.skipped:
            lines.append("skipped (over path budget): " + ", ".join(f"d={d} b={b}" for d, b in self.skipped))
        return "\n".join(lines) + "\n"


def _model_unit(args: tuple) -> tuple[list[float], list[float]]:
    d, b, eps_values, trials, seed, budget = args
    rng = Rand48(seed)
    tree = generate_tree(d, b, rng, budget)
    f_vals, neg = [], []
    for eps in eps_values:
        res = perturb_and_classify(tree, eps, trials, rng)
        f_vals.append(100.0 * res.f_measure)
        neg.append(res.negative_fraction)
    return f_vals, neg


def model_seed(seed: int, d: int, b: int, model: int) -> int:
    return derive_seed(seed, "tree", d, b, model)


def sweep(
    depths: Sequence[int] = PAPER_DEPTHS,
    breadths: Sequence[int] = PAPER_BREADTHS,
    eps_values: Sequence[float] = PAPER_EPS,
    models_per_topology: int = 100,
    trials_per_model: int = 400,
    seed: int = 0,
    jobs: int = 1,
    path_budget: int = DEFAULT_PATH_BUDGET,
) -> SweepTable:
    """F-measure table over depth x eps, pooled over breadths and models.

    Topologies with more than ``path_budget`` paths are skipped and listed.
    """
    if not depths or not breadths or not eps_values:
        raise ValueError("depths, breadths and eps values must be non-empty")
    table = SweepTable(list(depths), list(breadths), list(eps_values), models_per_topology, trials_per_model)
    keys, units = [], []
    for d in depths:
        for b in breadths:
            if b**d > path_budget:
                table.skipped.append((d, b))
                continue
            for m in range(models_per_topology):
                keys.append((d, b, m))
                units.append((d, b, list(eps_values), trials_per_model, model_seed(seed, d, b, m), path_budget))
    results = map_units(_model_unit, units, jobs)
    for key, (f_vals, neg) in zip(keys, results):
        table.per_model[key] = f_vals
        table.negative[key] = neg
    return table
