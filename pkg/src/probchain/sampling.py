"""Deterministic rand48 streams and the noise draws built on them.

The generator is the classic 48-bit linear congruential generator behind
``srand48``/``drand48``.  Scalar methods follow the C library bit for bit;
the block methods produce exactly the same stream using jump-ahead
multipliers so that large Monte-Carlo runs stay vectorized.
"""

from __future__ import annotations

import enum
import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np

MULTIPLIER = 0x5DEECE66D
INCREMENT = 0xB
MODULUS = 1 << 48
MASK = MODULUS - 1
SEED_LOW = 0x330E

_BLOCK = 1 << 16
_MASK64 = np.uint64(MASK)
_jump_mul: np.ndarray | None = None
_jump_add: np.ndarray | None = None


def seed_state(s: int) -> int:
    """State produced by ``srand48(s)``: high 32 bits from ``s``, low 16 fixed."""
    return ((int(s) & 0xFFFFFFFF) << 16) | SEED_LOW


def _jump_tables() -> tuple[np.ndarray, np.ndarray]:
    # Entry k-1 holds (A^k, c*(A^k - 1)/(A - 1)) mod 2^48, k = 1.._BLOCK.
    global _jump_mul, _jump_add
    if _jump_mul is None:
        mul = np.array([MULTIPLIER], dtype=np.uint64)
        add = np.array([INCREMENT], dtype=np.uint64)
        while mul.size < _BLOCK:
            m_last, a_last = mul[-1], add[-1]
            mul = np.concatenate([mul, (mul * m_last) & _MASK64])
            add = np.concatenate([add, (mul[: add.size] * a_last + add) & _MASK64])
        _jump_mul, _jump_add = mul[:_BLOCK], add[:_BLOCK]
    return _jump_mul, _jump_add


class Rand48:
    """A single-owner rand48 stream.

    >>> r = Rand48(1)
    >>> round(r.next_uniform(), 12)
    0.041630344772
    """

    def __init__(self, seed: int = 0):
        self.seed(seed)

    def seed(self, s: int) -> int:
        self.state = seed_state(s)
        self._spare: float | None = None
        return self.state

    # -- scalar draws -----------------------------------------------------
    def next_uniform(self) -> float:
        self.state = (MULTIPLIER * self.state + INCREMENT) & MASK
        return self.state / MODULUS

    def next_bipolar(self, a: float) -> float:
        return 2.0 * a * (self.next_uniform() - 0.5)

    def next_gaussian(self, sigma: float) -> float:
        """Polar-method normal deviate; the second value of a pair is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return sigma * z
        while True:
            x = 2.0 * self.next_uniform() - 1.0
            y = 2.0 * self.next_uniform() - 1.0
            s = x * x + y * y
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = y * f
        return sigma * x * f

    # -- block draws ------------------------------------------------------
    def _states(self, count: int) -> np.ndarray:
        mul, add = _jump_tables()
        out = np.empty(count, dtype=np.uint64)
        s = np.uint64(self.state)
        pos = 0
        while pos < count:
            m = min(_BLOCK, count - pos)
            chunk = out[pos : pos + m]
            np.multiply(mul[:m], s, out=chunk)
            chunk += add[:m]
            chunk &= _MASK64
            s = chunk[-1]
            pos += m
        if count:
            self.state = int(s)
        return out

    def uniforms(self, count: int) -> np.ndarray:
        """The next ``count`` values of :meth:`next_uniform`, as float64."""
        u = self._states(count).astype(np.float64)
        u *= 1.0 / MODULUS  # power of two: exact
        return u

    def bipolar(self, a: float, count: int) -> np.ndarray:
        """Block form of :meth:`next_bipolar`, same rounding."""
        u = self.uniforms(count)
        u -= 0.5
        u *= 2.0 * a
        return u

    def gaussians(self, sigma: float, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.float64)
        pos = 0
        if count and self._spare is not None:
            out[0] = self._spare
            self._spare = None
            pos = 1
        while pos < count:
            pairs_needed = (count - pos + 1) // 2
            batch = int(pairs_needed / 0.78) + 16
            states = self._states(2 * batch)
            u = states.astype(np.float64) / float(MODULUS)
            x = 2.0 * u[0::2] - 1.0
            y = 2.0 * u[1::2] - 1.0
            s = x * x + y * y
            ok = np.flatnonzero((s > 0.0) & (s < 1.0))
            if ok.size >= pairs_needed:
                ok = ok[:pairs_needed]
                self.state = int(states[2 * ok[-1] + 1])
            elif ok.size == 0:
                continue
            else:
                self.state = int(states[-1])
            f = np.sqrt(-2.0 * np.log(s[ok]) / s[ok])
            z = np.empty(2 * ok.size)
            z[0::2] = x[ok] * f
            z[1::2] = y[ok] * f
            take = min(z.size, count - pos)
            out[pos : pos + take] = z[:take]
            pos += take
            if take < z.size:
                self._spare = float(z[take])
        return sigma * out


def derive_seed(master: int, *keys: object) -> int:
    """Independent 32-bit seed for one work unit of a larger run."""
    text = "/".join([str(int(master))] + [str(k) for k in keys])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def stream(master: int, *keys: object) -> Rand48:
    return Rand48(derive_seed(master, *keys))


def time_seed() -> int:
    """Microseconds field of the current wall-clock time."""
    return int(time.time() * 1e6) % 1_000_000


class NoiseFamily(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


UNIFORM_SD = math.sqrt(1.0 / 12.0)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive error on each probability.

    ``uniform`` draws from [-amplitude, amplitude]; ``gaussian`` uses
    sd = amplitude * sqrt(1/12).  ``truncated`` clamps perturbed values
    into [0, 1].
    """

    family: NoiseFamily = NoiseFamily.UNIFORM
    truncated: bool = False
    amplitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if self.amplitude < 0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.amplitude}")

    @property
    def label(self) -> str:
        return f"{'truncated' if self.truncated else 'untruncated'}-{self.family.value}"

    def with_amplitude(self, amplitude: float) -> "NoiseSpec":
        return NoiseSpec(self.family, self.truncated, amplitude)

    def draw(self, rng: Rand48, count: int) -> np.ndarray:
        if self.family is NoiseFamily.UNIFORM:
            return rng.bipolar(self.amplitude, count)
        return rng.gaussians(self.amplitude * UNIFORM_SD, count)
