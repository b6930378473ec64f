"""Affine one-parameter families A_t(x) = A(x)(I + t E(x)) = A(x) + t B(x).

A family couples a base system (Bernoulli shift or torus rotation) with
per-symbol (or per-phase) matrix data.  Products along orbits are always
renormalized every step, so overflow is impossible by construction and
log-norms are accumulated exactly.

The assumption checker validates, per symbol (or on a sampled phase
grid), the four structural hypotheses the downstream identities rely
on: analytic invertibility on a parameter strip, a coherent winding
sign, the affine form itself, and dominated splitting of the leading
coefficient cocycle B (plus an empirical strict-winding constant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base import BernoulliBase, TorusBase
from .errors import NonPositiveDeterminant, SizeGuardError, ValidationError
from .mat2 import (
    WindingClass,
    WindingTag,
    det2,
    singular_frame,
    trace2,
    wedge,
    winding_class,
)

__all__ = [
    "AffineFamily",
    "MatrixPolynomial",
    "AssumptionReport",
    "make_family",
    "schrodinger_family",
    "iterate",
    "matrix_polynomial",
    "check_assumptions",
]

_WORD_GUARD = 60


@dataclass(frozen=True)
class AffineFamily:
    """Base system plus matrix data; immutable after construction."""

    base: object
    a_mats: np.ndarray | None = None  # (kappa, 2, 2) for locally constant data
    e_mats: np.ndarray | None = None
    a_fun: object = None  # phase -> (2, 2) for torus families
    e_fun: object = None
    name: str = ""

    @property
    def locally_constant(self) -> bool:
        return self.a_mats is not None

    @property
    def kappa(self) -> int:
        if not self.locally_constant:
            raise ValidationError("not a locally constant family")
        return self.a_mats.shape[0]

    @property
    def b_mats(self) -> np.ndarray:
        return self.a_mats @ self.e_mats

    def a_of(self, x):
        return self.a_mats[x] if self.locally_constant else np.asarray(self.a_fun(x), float)

    def e_of(self, x):
        return self.e_mats[x] if self.locally_constant else np.asarray(self.e_fun(x), float)

    def b_of(self, x):
        return self.a_of(x) @ self.e_of(x)

    def evaluate(self, x, t):
        """A(x) + t B(x) over the scalar field of t (real or complex)."""
        return self.a_of(x) + t * self.b_of(x)

    def word_factors(self, word):
        """(A_j, B_j) arrays for a symbol word / phase sequence, in orbit order."""
        if self.locally_constant:
            word = np.asarray(word, dtype=np.int64)
            return self.a_mats[word], self.b_mats[word]
        word = np.asarray(word, dtype=float)
        a = np.stack([self.a_of(x) for x in word])
        b = np.stack([self.b_of(x) for x in word])
        return a, b

    def sl2_valued(self, tol: float = 1e-9) -> bool:
        """True when det A_t == 1 identically (det A = 1 and E nilpotent)."""
        if self.locally_constant:
            dets = np.array([det2(m) for m in self.a_mats])
            es = self.e_mats
        else:
            grid = np.linspace(0.0, 1.0, 64, endpoint=False)
            dets = np.array([det2(self.a_of(x)) for x in grid])
            es = np.stack([self.e_of(x) for x in grid])
        if np.abs(dets - 1.0).max() > tol:
            return False
        sq = np.einsum("kij,kjl->kil", es, es)
        scale = np.abs(es).max(axis=(1, 2)) ** 2 + 1e-300
        return bool((np.abs(sq).max(axis=(1, 2)) <= 1e-12 * scale).all())


def make_family(base, a_list, e_list, name: str = "") -> AffineFamily:
    """Build a locally constant family from per-symbol A and E matrices."""
    a = np.asarray(a_list, dtype=float).reshape(-1, 2, 2)
    e = np.asarray(e_list, dtype=float).reshape(-1, 2, 2)
    if isinstance(base, BernoulliBase) and a.shape[0] != base.kappa:
        raise ValidationError(
            f"family has {a.shape[0]} symbols but the base has kappa = {base.kappa}"
        )
    if a.shape != e.shape:
        raise ValidationError("A and E lists must have matching shapes")
    for j, m in enumerate(a):
        d = det2(m)
        if not d > 0:
            raise NonPositiveDeterminant(j, float(d))
    return AffineFamily(base=base, a_mats=a, e_mats=e, name=name)


_SCHRODINGER_E = np.array([[0.0, 0.0], [1.0, 0.0]])


def schrodinger_family(potential, base=None, name: str = "schrodinger") -> AffineFamily:
    """Family [[v(x) - t, -1], [1, 0]] written as A(x)(I + t E).

    ``potential`` is a per-symbol value list (Bernoulli base) or a
    callable of the phase (torus base).  The generated E is nilpotent,
    so the family is SL2-valued for every complex t.
    """
    if callable(potential):
        if base is None:
            raise ValidationError("a torus potential needs an explicit base")
        a_fun = lambda x: np.array([[potential(x), -1.0], [1.0, 0.0]])
        e_fun = lambda x: _SCHRODINGER_E
        return AffineFamily(base=base, a_fun=a_fun, e_fun=e_fun, name=name)
    vals = np.atleast_1d(np.asarray(potential, dtype=float))
    if base is None:
        base = BernoulliBase(probs=tuple([1.0 / len(vals)] * len(vals)))
    a = np.stack([np.array([[v, -1.0], [1.0, 0.0]]) for v in vals])
    e = np.stack([_SCHRODINGER_E] * len(vals))
    return make_family(base, a, e, name=name)


@dataclass
class IterationResult:
    log_norm: float
    direction: np.ndarray  # unit vector, real or complex
    n_steps: int
    step_log_norms: np.ndarray | None = None


def iterate(family: AffineFamily, orbit, t, v=None, keep_steps: bool = False) -> IterationResult:
    """Renormalized product along an orbit: log ||A_t^n(x) v|| plus direction.

    Real t keeps the real code path; complex t runs the identical
    recursion over complex vectors.  The vector is rescaled to unit norm
    every step, so the accumulated log-norm never overflows.
    """
    a, b = family.word_factors(orbit)
    n = a.shape[0]
    complex_t = bool(np.iscomplexobj(t)) and t.imag != 0
    if v is None:
        v = np.array([1.0, 0.0])
    u = np.asarray(v, dtype=complex if complex_t else float)
    nu = np.linalg.norm(u)
    if nu == 0:
        raise ValidationError("iterate requires a nonzero start vector")
    u = u / nu
    tval = complex(t) if complex_t else float(np.real(t))
    total = 0.0
    steps = np.empty(n) if keep_steps else None
    for j in range(n):
        u = a[j] @ u + tval * (b[j] @ u)
        nrm = math.hypot(abs(u[0]), abs(u[1]))
        if nrm == 0.0:
            raise ValidationError("product annihilated the tracked vector")
        u = u / nrm
        total += math.log(nrm)
        if keep_steps:
            steps[j] = math.log(nrm)
    return IterationResult(log_norm=total, direction=u, n_steps=n, step_log_norms=steps)


def iterate_matrix(family: AffineFamily, orbit, t):
    """Full 2x2 product with max-entry renormalization: (M_unit, log_scale)."""
    a, b = family.word_factors(orbit)
    complex_t = bool(np.iscomplexobj(t)) and t.imag != 0
    tval = complex(t) if complex_t else float(np.real(t))
    m = np.eye(2, dtype=complex if complex_t else float)
    log_scale = 0.0
    for j in range(a.shape[0]):
        m = a[j] @ m + tval * (b[j] @ m)
        s = np.abs(m).max()
        m = m / s
        log_scale += math.log(s)
    return m, log_scale


@dataclass(frozen=True)
class MatrixPolynomial:
    """Coefficients of M_t = (A_n + t B_n) ... (A_1 + t B_1), max-entry scaled.

    The represented polynomial is exp(scale_log) * sum_k coeffs[k] t^k.
    """

    coeffs: np.ndarray  # (degree + 1, 2, 2)
    scale_log: float

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def evaluate(self, t):
        """Horner evaluation; returns the unscaled 2x2 matrix (times e^scale_log)."""
        m = self.coeffs[-1].astype(complex if np.iscomplexobj(t) else float).copy()
        for k in range(self.degree - 1, -1, -1):
            m = m * t + self.coeffs[k]
        return m

    def entry_coeffs(self, v, w) -> np.ndarray:
        """Scalar coefficients of t -> <M_t v, w> (same scale_log applies)."""
        return np.einsum("kij,j,i->k", self.coeffs, np.asarray(v), np.asarray(w))

    def trace_coeffs(self) -> np.ndarray:
        return self.coeffs[:, 0, 0] + self.coeffs[:, 1, 1]

    def derivative(self) -> "MatrixPolynomial":
        if self.degree == 0:
            return MatrixPolynomial(np.zeros((1, 2, 2)), self.scale_log)
        k = np.arange(1, self.degree + 1, dtype=float)
        return MatrixPolynomial(self.coeffs[1:] * k[:, None, None], self.scale_log)


def matrix_polynomial(family: AffineFamily, word) -> MatrixPolynomial:
    """Coefficient convolution of the affine product along a word (n <= 60)."""
    a, b = family.word_factors(word)
    n = a.shape[0]
    if n > _WORD_GUARD:
        raise SizeGuardError(
            f"matrix_polynomial guards word length at {_WORD_GUARD} (got {n}); "
            "coefficient arithmetic is ill-conditioned beyond that"
        )
    coeffs = np.zeros((n + 1, 2, 2))
    coeffs[0] = np.eye(2)
    scale_log = 0.0
    deg = 0
    for j in range(n):
        new = np.zeros((n + 1, 2, 2))
        new[: deg + 1] = np.einsum("il,klj->kij", a[j], coeffs[: deg + 1])
        new[1 : deg + 2] += np.einsum("il,klj->kij", b[j], coeffs[: deg + 1])
        deg += 1
        s = np.abs(new).max()
        coeffs = new / s
        scale_log += math.log(s)
    return MatrixPolynomial(coeffs=coeffs, scale_log=scale_log)


# ---------------------------------------------------------------------------
# assumption checking


@dataclass(frozen=True)
class InvertibilityReport:
    holds: bool
    strip_r: float  # half-width of the complex strip; inf for nilpotent E
    det_floor_c: float


@dataclass(frozen=True)
class WindingReport:
    sign: int  # +1 / -1 / 0 (incoherent or no winding data)
    classes: tuple


@dataclass(frozen=True)
class DominatedSplittingReport:
    holds: bool
    rank1: bool
    chain_floor: float  # min over symbol pairs of |B_i B_j| / (|B_i| |B_j|)


@dataclass(frozen=True)
class StrictWindingReport:
    c_star: float
    n0: int


@dataclass(frozen=True)
class AssumptionReport:
    invertibility: InvertibilityReport
    winding: WindingReport
    affine: bool
    dominated_splitting: DominatedSplittingReport
    strict_winding: StrictWindingReport
    sampled: bool = False  # torus data: grid-sampled, not certified

    @property
    def all_hold(self) -> bool:
        return (
            self.invertibility.holds
            and self.winding.sign != 0
            and self.affine
            and self.dominated_splitting.holds
        )

    def failed(self) -> list:
        out = []
        if not self.invertibility.holds:
            out.append("invertibility")
        if self.winding.sign == 0:
            out.append("winding")
        if not self.dominated_splitting.holds:
            out.append("dominated_splitting")
        return out


def _symbol_matrices(family: AffineFamily, phase_grid: int):
    if family.locally_constant:
        return family.a_mats, family.e_mats, False
    xs = np.linspace(0.0, 1.0, phase_grid, endpoint=False)
    a = np.stack([family.a_of(x) for x in xs])
    e = np.stack([family.e_of(x) for x in xs])
    return a, e, True


def _invertibility(a_mats, e_mats) -> InvertibilityReport:
    dets_a = np.array([det2(m) for m in a_mats])
    strip = math.inf
    affine_floor = 1.0
    non_nilpotent = []
    for e in e_mats:
        scale = np.abs(e).max()
        if scale == 0.0 or np.abs(e @ e).max() <= 1e-12 * scale**2:
            continue  # nilpotent: det(I + tE) == 1 on all of C
        delta_e = 4.0 * det2(e) - trace2(e) ** 2
        if delta_e <= 0:
            return InvertibilityReport(False, 0.0, 0.0)
        non_nilpotent.append((delta_e, det2(e)))
    if non_nilpotent:
        r = min(d for d, _ in non_nilpotent)
        ell = max(abs(de) for _, de in non_nilpotent)
        delta2 = r / (8.0 * ell**2)
        strip = math.sqrt(delta2)
        affine_floor = (r / 4.0) * (r / (4.0 * ell**2) - delta2)
    c = float(dets_a.min() * affine_floor)
    return InvertibilityReport(c > 0, float(strip), c)


def _winding(e_mats) -> WindingReport:
    classes = tuple(winding_class(e) for e in e_mats)
    signs = {c.sign for c in classes}
    degenerate = any(c.tag in (WindingTag.ZERO, WindingTag.INDEFINITE) for c in classes)
    if degenerate or len(signs) != 1 or 0 in signs:
        return WindingReport(0, classes)
    return WindingReport(signs.pop(), classes)


def _dominated_splitting(a_mats, e_mats) -> DominatedSplittingReport:
    b_mats = np.einsum("kij,kjl->kil", a_mats, e_mats)
    rank1 = True
    for bm in b_mats:
        if np.abs(bm).max() == 0.0:
            return DominatedSplittingReport(False, False, 0.0)
        fr = singular_frame(bm)
        if fr.conorm > 1e-10 * fr.norm:
            rank1 = False
    norms = np.linalg.norm(b_mats.reshape(-1, 4), axis=1)
    floor = math.inf
    for bi in b_mats:
        prods = np.einsum("ij,kjl->kil", bi, b_mats)
        pn = np.linalg.norm(prods.reshape(-1, 4), axis=1)
        floor = min(floor, float((pn / (np.linalg.norm(bi.ravel()) * norms)).min()))
    holds = rank1 and floor >= 1e-10
    return DominatedSplittingReport(holds, rank1, floor)


def _two_step_speed(a_mats, b_mats, i, j, t, v):
    """Winding speed of the 2-step product A_t(j) A_t(i) at direction v."""
    a1 = a_mats[i] + t * b_mats[i]
    a2 = a_mats[j] + t * b_mats[j]
    y = a1 @ v
    d = b_mats[i] @ v  # derivative of first factor applied to v
    y2 = a2 @ y
    d2 = a2 @ d + b_mats[j] @ y
    return wedge(y2, d2) / (y2[0] ** 2 + y2[1] ** 2)


def _strict_winding(a_mats, e_mats, sign, t_interval, samples, seed) -> StrictWindingReport:
    if sign == 0:
        return StrictWindingReport(0.0, 2)
    b_mats = np.einsum("kij,kjl->kil", a_mats, e_mats)
    kappa = a_mats.shape[0]
    rng = np.random.Generator(np.random.Philox(key=seed))
    lo, hi = t_interval
    ts = rng.uniform(lo, hi, samples)
    thetas = rng.uniform(0.0, math.pi, samples)
    ii = rng.integers(0, kappa, samples)
    jj = rng.integers(0, kappa, samples)
    c_star = math.inf
    for t, th, i, j in zip(ts, thetas, ii, jj):
        v = np.array([math.cos(th), math.sin(th)])
        c_star = min(c_star, sign * _two_step_speed(a_mats, b_mats, i, j, t, v))
    return StrictWindingReport(float(max(c_star, 0.0)), 2)


def check_assumptions(
    family: AffineFamily,
    t_interval=(-1.0, 1.0),
    phase_grid: int = 4096,
    strict_samples: int = 20000,
    seed: int = 0,
) -> AssumptionReport:
    """Validate the four structural assumptions symbol by symbol.

    For torus families the checks run on a sampled phase grid and the
    report is flagged ``sampled`` (a sampling check, not a certificate).
    The strict-winding constant is the empirical minimum of the two-step
    winding speed over random (symbols, t, direction) draws in
    ``t_interval``.
    """
    a_mats, e_mats, sampled = _symbol_matrices(family, phase_grid)
    inv = _invertibility(a_mats, e_mats)
    wind = _winding(e_mats)
    dom = _dominated_splitting(a_mats, e_mats)
    strict = _strict_winding(a_mats, e_mats, wind.sign, t_interval, strict_samples, seed)
    return AssumptionReport(
        invertibility=inv,
        winding=wind,
        affine=True,
        dominated_splitting=dom,
        strict_winding=strict,
        sampled=sampled,
    )
