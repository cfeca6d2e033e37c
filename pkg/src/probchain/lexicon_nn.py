"""Word identification from letter counts alone (no letter order).

Each word becomes a 62-dimensional count vector over ``A-Z a-z 0-9``.  Two
slightly noised copies of a sampled lexicon act as reference and test sets
for nearest-neighbour matching.  Words that are anagrams of each other share
a vector, so the expected accuracy is known exactly from the anagram classes.
"""

from __future__ import annotations

import math
import string
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .parallel import map_units
from .sampling import Rand48, derive_seed

ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits
DIM = len(ALPHABET)
_INDEX = {ch: i for i, ch in enumerate(ALPHABET)}
MAX_NOISE = 1.0 / (2 * DIM)

# Letters that NFKD does not decompose into an ASCII base.
TRANSLITERATION = {
    "ß": "ss",
    "ẞ": "SS",
    "æ": "ae",
    "Æ": "AE",
    "œ": "oe",
    "Œ": "OE",
    "ø": "o",
    "Ø": "O",
    "ł": "l",
    "Ł": "L",
    "đ": "d",
    "Đ": "D",
    "ð": "d",
    "Ð": "D",
    "þ": "th",
    "Þ": "TH",
    "ı": "i",
    "ĸ": "k",
    "ŋ": "n",
    "Ŋ": "N",
}

_NN_BLOCK = 2048


def transliterate(word: str) -> str:
    """Nearest-ASCII spelling; case is kept, other characters pass through."""
    mapped = "".join(TRANSLITERATION.get(ch, ch) for ch in word)
    decomposed = unicodedata.normalize("NFKD", mapped)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def vectorize(word: str) -> np.ndarray:
    """62 letter/digit counts of ``word`` after transliteration."""
    counts = np.zeros(DIM, dtype=np.int64)
    for ch in transliterate(word):
        i = _INDEX.get(ch)
        if i is not None:
            counts[i] += 1
    if not counts.any():
        raise ValueError(f"{word!r} has no letters or digits")
    return counts


@dataclass
class Lexicon:
    name: str
    words: list[str]
    vectors: np.ndarray  # (len(words), 62) int

    @classmethod
    def from_words(cls, words: Iterable[str], name: str = "lexicon", unique: bool = True) -> "Lexicon":
        kept, vecs, seen = [], [], set()
        for w in words:
            if unique and w in seen:
                continue
            try:
                v = vectorize(w)
            except ValueError:
                continue
            seen.add(w)
            kept.append(w)
            vecs.append(v)
        vectors = np.array(vecs, dtype=np.int64).reshape(len(vecs), DIM)
        return cls(name, kept, vectors)

    def __len__(self) -> int:
        return len(self.words)

    def anagram_classes(self, indices: Sequence[int] | None = None) -> list[list[int]]:
        idx = range(len(self)) if indices is None else indices
        classes: dict[bytes, list[int]] = {}
        for i in idx:
            classes.setdefault(self.vectors[i].tobytes(), []).append(int(i))
        return list(classes.values())


def load_lexicon(path: str | Path, name: str | None = None) -> Lexicon:
    """UTF-8 word list, one word per line; blanks and ``#`` lines are ignored.

    Repeated words are kept once; words without letters or digits are dropped.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        words = [ln.strip() for ln in fh]
    words = [w for w in words if w and not w.startswith("#")]
    return Lexicon.from_words(words, name or path.stem)


def sample_indices(n_total: int, size: int, rng: Rand48) -> np.ndarray:
    """Partial Fisher-Yates shuffle: ``size`` distinct indices from ``range(n_total)``."""
    if size > n_total:
        raise ValueError(f"cannot draw {size} words from a lexicon of {n_total}")
    perm = np.arange(n_total)
    u = rng.uniforms(size)
    for i in range(size):
        j = i + min(int(u[i] * (n_total - i)), n_total - i - 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:size]


@dataclass
class SampleSets:
    indices: np.ndarray
    reference: np.ndarray
    test: np.ndarray


def build_sets(lexicon: Lexicon, sample_size: int, noise_a: float, rng: Rand48) -> SampleSets:
    """Draw ``sample_size`` words and make two independently noised copies."""
    if not 0 <= noise_a < MAX_NOISE:
        raise ValueError(f"noise amplitude must lie in [0, 1/{2 * DIM}), got {noise_a}")
    idx = sample_indices(len(lexicon), sample_size, rng)
    base = lexicon.vectors[idx].astype(np.float64)
    reference = base + rng.bipolar(noise_a, base.size).reshape(base.shape)
    test = base + rng.bipolar(noise_a, base.size).reshape(base.shape)
    return SampleSets(idx, reference, test)


def nearest_reference(reference: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Index of the Euclidean-nearest reference row for every test row."""
    ref_sq = np.einsum("ij,ij->i", reference, reference)
    out = np.empty(len(test), dtype=np.int64)
    for start in range(0, len(test), _NN_BLOCK):
        block = test[start : start + _NN_BLOCK]
        # |t|^2 is constant per row and does not change the argmin.
        d2 = ref_sq[None, :] - 2.0 * (block @ reference.T)
        out[start : start + len(block)] = np.argmin(d2, axis=1)
    return out


def nn_classify(reference: np.ndarray, test: np.ndarray) -> float:
    """Fraction of test rows whose nearest reference row is the same word.

    Row i of both sets holds the same lexicon entry.
    """
    hits = nearest_reference(reference, test) == np.arange(len(test))
    return float(np.mean(hits))


def expected_accuracy_oracle(lexicon: Lexicon, indices: Sequence[int] | None = None) -> float:
    """Exact expected accuracy: each word scores 1/|its anagram class in the sample|."""
    classes = lexicon.anagram_classes(indices)
    total = sum(len(c) for c in classes)
    return len(classes) / total


@dataclass
class ExperimentResult:
    name: str
    lexicon_size: int
    sample_size: int
    accuracies: list[float]
    oracles: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def sd(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    @property
    def oracle_mean(self) -> float:
        return float(np.mean(self.oracles))

    def binomial_se(self, k: int) -> float:
        p = self.oracles[k]
        return math.sqrt(p * (1 - p) / self.sample_size)


def _repeat(args: tuple) -> tuple[float, float]:
    lexicon, sample_size, noise_a, seed = args
    sets = build_sets(lexicon, sample_size, noise_a, Rand48(seed))
    return nn_classify(sets.reference, sets.test), expected_accuracy_oracle(lexicon, sets.indices)


def run_experiment(
    lexicon: Lexicon,
    repeats: int = 6,
    sample_size: int = 20_000,
    noise_a: float = 0.0001,
    seed: int = 0,
    jobs: int = 1,
) -> ExperimentResult:
    if len(lexicon) < sample_size:
        raise ValueError(f"lexicon {lexicon.name!r} has {len(lexicon)} words, fewer than {sample_size}")
    units = [(lexicon, sample_size, noise_a, derive_seed(seed, "lexnn", r)) for r in range(repeats)]
    results = map_units(_repeat, units, jobs)
    return ExperimentResult(
        lexicon.name,
        len(lexicon),
        sample_size,
        [a for a, _ in results],
        [o for _, o in results],
    )
