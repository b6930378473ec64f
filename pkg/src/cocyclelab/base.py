"""Base dynamics: Bernoulli shifts, torus rotations, exact word enumeration.

Randomness uses the counter-based Philox generator so that independent
"streams" (one per Monte Carlo orbit) are reproducible and disjoint:
stream ``k`` of seed ``s`` is ``Philox(key=s).jumped(k)``.  Identical
``(seed, stream, n)`` always yields the identical orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SizeGuardError, ValidationError

__all__ = ["BernoulliBase", "TorusBase", "WordEnumerator", "entropy"]

_ENUM_GUARD = 10**8


@dataclass(frozen=True)
class BernoulliBase:
    """I.i.d. symbols 0..kappa-1 with law `probs`, shifted one step per tick."""

    probs: tuple
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("probs must be a non-empty vector")
        if np.any(p <= 0):
            raise ValidationError("probs must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"probs must sum to 1 (got {p.sum()!r})")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @property
    def kappa(self) -> int:
        return len(self.probs)

    def entropy(self) -> float:
        """Shannon entropy -sum p log p (natural log)."""
        return float(-sum(p * math.log(p) for p in self.probs if p > 0))

    def _rng(self, stream: int) -> np.random.Generator:
        bg = np.random.Philox(key=int(self.seed))
        stream = int(stream)
        if stream:
            bg = bg.jumped(stream)
        return np.random.Generator(bg)

    def sample_orbit(self, n: int, stream: int = 0) -> np.ndarray:
        """Symbols of one orbit of length n, reproducible from (seed, stream)."""
        if n < 1:
            raise ValidationError("orbit length must be >= 1")
        u = self._rng(stream).random(n)
        edges = np.cumsum(self.probs)[:-1]
        return np.searchsorted(edges, u, side="right").astype(np.int64)

    def sample_orbits(self, n: int, samples: int, stream0: int = 0) -> np.ndarray:
        """(samples, n) array; row k uses stream ``stream0 + k``."""
        out = np.empty((samples, n), dtype=np.int64)
        for k in range(samples):
            out[k] = self.sample_orbit(n, stream=stream0 + k)
        return out


@dataclass(frozen=True)
class TorusBase:
    """Rigid rotation x -> x + alpha mod 1 started at x0."""

    alpha: float
    x0: float = 0.0

    def sample_orbit(self, n: int, stream: int = 0) -> np.ndarray:
        """Phases x0', x0'+alpha, ... with x0' = x0 + stream * golden offset.

        Uses compensated (Kahan) accumulation across chunks so the phase
        does not drift even for very long orbits.
        """
        if n < 1:
            raise ValidationError("orbit length must be >= 1")
        x0 = (self.x0 + stream * 0.7548776662466927) % 1.0
        out = np.empty(n, dtype=float)
        chunk = 1 << 16
        start, comp = x0, 0.0
        pos = 0
        while pos < n:
            m = min(chunk, n - pos)
            out[pos : pos + m] = (start + np.arange(m) * self.alpha) % 1.0
            # Kahan step advancing the chunk start by m * alpha mod 1
            y = (m * self.alpha) % 1.0 - comp
            t = start + y
            comp = (t - start) - y
            start = t % 1.0
            pos += m
        return out

    def is_irrational_like(self, depth: int = 20, tol: float = 1e-12) -> bool:
        """Continued-fraction probe: no convergent matches alpha to tol."""
        a = self.alpha % 1.0
        if a == 0.0:
            return False
        x = a
        h0, h1, k0, k1 = 0, 1, 1, 0
        for _ in range(depth):
            ai = int(1.0 / x)
            h0, h1 = h1, ai * h1 + h0
            k0, k1 = k1, ai * k1 + k0
            if abs(a - h1 / k1) < tol:
                return False
            frac = 1.0 / x - ai
            if frac <= 0:
                return False
            x = frac
        return True


def entropy(base: BernoulliBase) -> float:
    return base.entropy()


@dataclass(frozen=True)
class WordEnumerator:
    """Exhaustive enumeration of all kappa^n words with their Bernoulli weights.

    The exact averages computed from this stream are the brute-force
    oracle against which every Monte Carlo estimator is validated.
    """

    probs: tuple
    length: int

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        kappa = len(self.probs)
        if self.length < 1:
            raise ValidationError("word length must be >= 1")
        if kappa**self.length > _ENUM_GUARD:
            raise SizeGuardError(
                f"kappa^n = {kappa}^{self.length} exceeds the {_ENUM_GUARD} enumeration guard"
            )

    @property
    def kappa(self) -> int:
        return len(self.probs)

    @property
    def count(self) -> int:
        return self.kappa**self.length

    def words(self) -> np.ndarray:
        """(kappa^n, n) symbol array in lexicographic order."""
        n, kappa = self.length, self.kappa
        idx = np.arange(self.count, dtype=np.int64)
        out = np.empty((self.count, n), dtype=np.int64)
        for j in range(n - 1, -1, -1):
            out[:, j] = idx % kappa
            idx //= kappa
        return out

    def weights(self) -> np.ndarray:
        p = np.asarray(self.probs)
        w = np.ones(self.count)
        words = self.words()
        for j in range(self.length):
            w *= p[words[:, j]]
        return w

    def __iter__(self):
        """Stream of (word, weight) pairs in lexicographic order."""
        words = self.words()
        weights = self.weights()
        for w, wt in zip(words, weights):
            yield w, float(wt)
