"""Closed-form 2x2 linear algebra.

Matrices are plain ``(2, 2)`` ndarrays (real or complex), vectors are
``(2,)`` ndarrays.  Everything here is a pure function; nothing is ever
mutated in place.  All decompositions are closed-form (no iterative
LAPACK calls) so they are deterministic and cheap inside hot loops.

Conventions
-----------
* ``wedge(v, w)`` is the determinant of the column pair ``(v, w)``.
* The symmetrized form ``e_sharp(E) = (J E + (J E)^t) / 2`` with
  ``J = [[0, 1], [-1, 0]]`` classifies the winding sense of the affine
  curve ``t -> A (I + t E)``: the curve winds positively exactly when
  ``e_sharp(E)`` is positive (semi)definite.  The sign conventions used
  everywhere downstream are *derived* from this form, never assumed
  from off-diagonal sign patterns.
* Nilpotent trace-free matrices with a coherent off-diagonal sign form
  two cones parametrized by ``(r, theta)`` via :func:`cone_embed`;
  ``r < 0`` gives the positively winding cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError

__all__ = [
    "WindingTag",
    "WindingClass",
    "ConeCoords",
    "SingularFrame",
    "wedge",
    "det2",
    "trace2",
    "inv2",
    "unit",
    "proj_dist",
    "det_affine",
    "e_sharp",
    "xi_seminorm",
    "winding_class",
    "cone_embed",
    "cone_coords",
    "singular_frame",
    "operator_norm",
    "dist_to_least_singular",
    "gamma_matching",
    "almost_turn_gap",
]

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def wedge(v, w):
    """Signed area det(v, w) = v1*w2 - v2*w1."""
    return v[0] * w[1] - v[1] * w[0]


def det2(m):
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def trace2(m):
    return m[0, 0] + m[1, 1]


def inv2(m):
    d = det2(m)
    if d == 0:
        raise ValidationError("matrix is singular")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / d


def unit(v):
    n = math.hypot(*(abs(c) for c in v)) if np.iscomplexobj(v) else math.hypot(v[0], v[1])
    if n == 0:
        raise ValidationError("cannot normalize the zero vector")
    return np.asarray(v) / n


def proj_dist(v, w):
    """Distance |v ^ w| / (|v| |w|) between the projective points of v, w."""
    return abs(wedge(v, w)) / (math.hypot(v[0], v[1]) * math.hypot(w[0], w[1]))


def det_affine(e, t):
    """det(I + t E) evaluated as 1 + t tr(E) + t^2 det(E)."""
    return 1.0 + t * trace2(e) + t * t * det2(e)


def e_sharp(e):
    """Symmetrized form (J E + (J E)^t) / 2; det e_sharp = discriminant/4."""
    off = 0.5 * (e[1, 1] - e[0, 0])
    return np.array([[e[1, 0], off], [off, -e[0, 1]]])


def discriminant(e):
    """4 det(E) - tr(E)^2, i.e. 4 det(e_sharp(E))."""
    return 4.0 * det2(e) - trace2(e) ** 2


def xi_seminorm(e):
    """max(|e11 - e22|, 2|e12|, 2|e21|); zero exactly when e_sharp(E) = 0."""
    return max(abs(e[0, 0] - e[1, 1]), 2.0 * abs(e[0, 1]), 2.0 * abs(e[1, 0]))


class WindingTag(Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    POSITIVE_SEMIDEFINITE = "PositiveSemidefinite"
    NEGATIVE_DEFINITE = "NegativeDefinite"
    NEGATIVE_SEMIDEFINITE = "NegativeSemidefinite"
    INDEFINITE = "Indefinite"
    ZERO = "Zero"


@dataclass(frozen=True)
class WindingClass:
    """Definiteness class of e_sharp(E) plus derived data.

    ``eig_dir`` is the unique real eigendirection of E (equivalently the
    null direction of e_sharp) and is only set for the semidefinite tags.
    """

    tag: WindingTag
    discriminant: float
    eig_dir: np.ndarray | None = None

    @property
    def sign(self) -> int:
        if self.tag in (WindingTag.POSITIVE_DEFINITE, WindingTag.POSITIVE_SEMIDEFINITE):
            return 1
        if self.tag in (WindingTag.NEGATIVE_DEFINITE, WindingTag.NEGATIVE_SEMIDEFINITE):
            return -1
        return 0


def _sym_eigh2(s):
    """Eigenvalues (descending) and eigenvectors of a symmetric 2x2."""
    p, q, r = s[0, 0], s[0, 1], s[1, 1]
    half_tr = 0.5 * (p + r)
    delta = math.hypot(0.5 * (p - r), q)
    lam1 = half_tr + delta
    lam2 = half_tr - delta
    if delta == 0.0:
        return (lam1, lam2), (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    # pick the numerically larger expression of the eigenvector
    c1 = np.array([q, lam1 - p])
    c2 = np.array([lam1 - r, q])
    v1 = c1 if abs(c1[0]) + abs(c1[1]) >= abs(c2[0]) + abs(c2[1]) else c2
    v1 = v1 / math.hypot(v1[0], v1[1])
    v2 = np.array([-v1[1], v1[0]])
    return (lam1, lam2), (v1, v2)


def _canonical_sign(v):
    for c in v:
        if c != 0:
            return v if c > 0 else -v
    return v


def winding_class(e, rel_tol: float = 1e-12) -> WindingClass:
    """Classify the definiteness of e_sharp(E) by its eigenvalues.

    Eigenvalues whose magnitude is below ``rel_tol * scale`` count as
    zero, which makes the tag stable under perturbations of that size.
    """
    e = np.asarray(e, dtype=float)
    s = e_sharp(e)
    (lam1, lam2), (v1, v2) = _sym_eigh2(s)
    scale = max(abs(lam1), abs(lam2), 1e-300)
    tol = rel_tol * max(scale, np.abs(e).max())
    z1 = abs(lam1) <= tol
    z2 = abs(lam2) <= tol
    disc = discriminant(e)
    if z1 and z2:
        return WindingClass(WindingTag.ZERO, disc)
    if z2 and lam1 > 0:
        return WindingClass(WindingTag.POSITIVE_SEMIDEFINITE, disc, _canonical_sign(v2))
    if z1 and lam2 < 0:
        return WindingClass(WindingTag.NEGATIVE_SEMIDEFINITE, disc, _canonical_sign(v1))
    if lam1 > 0 and lam2 > 0:
        return WindingClass(WindingTag.POSITIVE_DEFINITE, disc)
    if lam1 < 0 and lam2 < 0:
        return WindingClass(WindingTag.NEGATIVE_DEFINITE, disc)
    return WindingClass(WindingTag.INDEFINITE, disc)


@dataclass(frozen=True)
class ConeCoords:
    """(r, theta) chart of the nilpotent winding cones; r != 0.

    ``theta`` is the direction of the kernel (= range = eigendirection)
    of the reconstructed matrix.  The chart is unique up to
    ``theta -> theta + pi``; :func:`cone_coords` returns the
    representative in [0, pi).
    """

    r: float
    theta: float


def cone_embed(coords_or_r, theta: float | None = None) -> np.ndarray:
    """Nilpotent matrix r * [[-c s, c^2], [-s^2, c s]] with c, s = cos/sin theta."""
    if theta is None:
        r, theta = coords_or_r.r, coords_or_r.theta
    else:
        r = coords_or_r
    if r == 0:
        raise ValidationError("cone coordinates require r != 0")
    c, s = math.cos(theta), math.sin(theta)
    return r * np.array([[-c * s, c * c], [-s * s, c * s]])


def cone_coords(e, tol: float = 1e-9) -> ConeCoords:
    """Left inverse of :func:`cone_embed` (theta reduced to [0, pi)).

    Rejects matrices that are not nilpotent cone elements: trace and
    determinant must vanish, the seminorm Xi must be positive, and the
    off-diagonal entries may not share a strict sign.
    """
    e = np.asarray(e, dtype=float)
    scale = np.abs(e).max()
    if scale == 0.0 or xi_seminorm(e) <= tol * scale:
        raise ValidationError("cone_coords: Xi(E) = 0 carries no cone data")
    if abs(trace2(e)) > tol * scale or abs(det2(e)) > tol * scale**2:
        raise ValidationError("cone_coords: matrix is not nilpotent (tr or det != 0)")
    if e[0, 1] * e[1, 0] > 0:
        raise ValidationError("cone_coords: off-diagonal entries have the same sign")
    r = e[0, 1] - e[1, 0]  # = r (c^2 + s^2)
    # kernel direction (c, s): from e11 = -r c s and e12 = r c^2
    if abs(e[0, 1]) >= abs(e[1, 0]):
        v = np.array([e[0, 1], -e[0, 0]])  # proportional to (c, s) * r c
    else:
        v = np.array([-e[0, 0], -e[1, 0]])  # proportional to (c, s) * r s
    theta = math.atan2(v[1], v[0]) % math.pi
    rec = cone_embed(r, theta)
    if np.abs(rec - e).max() > 1e-10 * scale:
        raise ValidationError("cone_coords: reconstruction failed; not a cone element")
    return ConeCoords(float(r), float(theta))


@dataclass(frozen=True)
class SingularFrame:
    """Singular directions of a real 2x2 matrix A.

    ``A vbar = norm * vbar_star`` and ``A vund = conorm * vund_star``;
    both pairs are orthonormal.  ``degenerate`` marks norm == conorm,
    where the directions are arbitrary and a canonical frame is used.
    """

    vbar: np.ndarray
    vund: np.ndarray
    vbar_star: np.ndarray
    vund_star: np.ndarray
    norm: float
    conorm: float
    degenerate: bool = False


def singular_frame(a, degeneracy_rtol: float = 1e-12) -> SingularFrame:
    """Closed-form SVD frame of a real 2x2 matrix via A^t A."""
    a = np.asarray(a, dtype=float)
    if not np.abs(a).max() > 0:
        raise ValidationError("singular_frame requires A != 0")
    g11 = a[0, 0] ** 2 + a[1, 0] ** 2
    g22 = a[0, 1] ** 2 + a[1, 1] ** 2
    g12 = a[0, 0] * a[0, 1] + a[1, 0] * a[1, 1]
    half_tr = 0.5 * (g11 + g22)
    delta = math.hypot(0.5 * (g11 - g22), g12)
    sigma1 = math.sqrt(max(half_tr + delta, 0.0))
    adet = abs(det2(a))
    sigma2 = adet / sigma1 if sigma1 > 0 else 0.0

    if delta <= degeneracy_rtol * half_tr:
        vbar = np.array([1.0, 0.0])
        vund = np.array([0.0, 1.0])
        degenerate = True
    else:
        c1 = np.array([g12, (half_tr + delta) - g11])
        c2 = np.array([(half_tr + delta) - g22, g12])
        vbar = c1 if abs(c1[0]) + abs(c1[1]) >= abs(c2[0]) + abs(c2[1]) else c2
        vbar = _canonical_sign(vbar / math.hypot(vbar[0], vbar[1]))
        vund = np.array([-vbar[1], vbar[0]])
        degenerate = False

    vbar_star = a @ vbar / sigma1
    av = a @ vund
    nav = math.hypot(av[0], av[1])
    if nav > 1e-150:
        vund_star = av / nav
    else:  # rank one: complete the image frame orthogonally
        vund_star = np.array([-vbar_star[1], vbar_star[0]])
    return SingularFrame(vbar, vund, vbar_star, vund_star, sigma1, sigma2, degenerate)


def operator_norm(a) -> float:
    """Largest singular value, closed form."""
    a = np.asarray(a, dtype=float)
    g11 = a[0, 0] ** 2 + a[1, 0] ** 2
    g22 = a[0, 1] ** 2 + a[1, 1] ** 2
    g12 = a[0, 0] * a[0, 1] + a[1, 0] * a[1, 1]
    half_tr = 0.5 * (g11 + g22)
    delta = math.hypot(0.5 * (g11 - g22), g12)
    return math.sqrt(max(half_tr + delta, 0.0))


def dist_to_least_singular(a, v) -> float:
    """Projective distance from v to the least-expanded direction of A in SL2.

    Uses the closed form sqrt((|Av|^2 - |A|^-2) / (|A|^2 - |A|^-2));
    requires det A = 1 and |A| > 1.
    """
    a = np.asarray(a, dtype=float)
    if abs(det2(a) - 1.0) > 1e-9:
        raise ValidationError("dist_to_least_singular requires det A = 1")
    na = operator_norm(a)
    if na <= 1.0 + 1e-14:
        raise ValidationError("dist_to_least_singular undefined for isometries (|A| = 1)")
    v = unit(np.asarray(v, dtype=float))
    av = a @ v
    na2 = na * na
    inv_na2 = 1.0 / na2
    num = (av[0] ** 2 + av[1] ** 2) - inv_na2
    return math.sqrt(max(num, 0.0) / (na2 - inv_na2))


def gamma_matching(b, a, gamma: float, grid_factor: float = 8.0):
    """Search for directions (e1, e2) certifying a gamma-matching of (B, A).

    A matching requires e2 = (A B) e1 projectively together with the
    norm sandwich e^gamma <= |B e1| <= |B| <= 2 e^gamma and the same for
    |A^{-1} e2| and |A|.  The search walks a projective grid of step
    e^{-gamma} / grid_factor and locally refines the certification
    margin by golden-section; the returned pair is certified exactly
    against the displayed conditions.  Returns ``None`` when no pair
    certifies (a legitimate outcome).
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    e_gamma = math.exp(gamma)
    nb = operator_norm(b)
    na = operator_norm(a)
    if not (e_gamma <= nb <= 2.0 * e_gamma and e_gamma <= na <= 2.0 * e_gamma):
        return None
    a_inv = inv2(a)
    ab = a @ b

    def margin(theta):
        e1 = np.array([math.cos(theta), math.sin(theta)])
        be1 = b @ e1
        nbe1 = math.hypot(be1[0], be1[1])
        img = ab @ e1
        nimg = math.hypot(img[0], img[1])
        if nbe1 == 0.0 or nimg == 0.0:
            return -math.inf, None, None
        e2 = img / nimg
        ainv_e2 = a_inv @ e2
        nai = math.hypot(ainv_e2[0], ainv_e2[1])
        return min(nbe1 - e_gamma, nai - e_gamma), e1, e2

    step = math.exp(-gamma) / grid_factor
    thetas = np.arange(0.0, math.pi, step)
    e1s = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    nbe1 = np.linalg.norm(e1s @ b.T, axis=1)
    imgs = e1s @ ab.T
    nimg = np.linalg.norm(imgs, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        e2s = imgs / nimg[:, None]
    nai = np.linalg.norm(e2s @ a_inv.T, axis=1)
    margins = np.minimum(nbe1 - e_gamma, nai - e_gamma)
    margins[~np.isfinite(margins)] = -math.inf
    k = int(np.argmax(margins))
    if margins[k] > 0.0:
        m, e1, e2 = margin(thetas[k])
        return e1, e2
    # golden-section polish of the margin around the best grid point
    lo, hi = thetas[k] - step, thetas[k] + step
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = margin(x1)[0], margin(x2)[0]
    for _ in range(60):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = margin(x1)[0]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = margin(x2)[0]
    m, e1, e2 = margin(0.5 * (lo + hi))
    if m > 0.0:
        return e1, e2
    return None


def almost_turn_gap(b, a, gamma: float, v, w) -> float:
    """Distance d(B v, A^{-1} w) for admissible v, w of a gamma-matching.

    The admissibility preconditions d(v, vund(B)) >= e^-gamma and
    d(w, vbar*(A)) >= e^-gamma are enforced; the matching itself is the
    caller's responsibility.  For gamma above the configured threshold
    the invariant suite asserts the result is <= 3 e^-gamma.
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    v = unit(np.asarray(v, dtype=float))
    w = unit(np.asarray(w, dtype=float))
    e_mgamma = math.exp(-gamma)
    fb = singular_frame(b)
    fa = singular_frame(a)
    d_v = proj_dist(v, fb.vund)
    if d_v < e_mgamma:
        raise ValidationError(
            f"almost_turn_gap: d(v, vund(B)) = {d_v:.3e} < e^-gamma = {e_mgamma:.3e}"
        )
    d_w = proj_dist(w, fa.vbar_star)
    if d_w < e_mgamma:
        raise ValidationError(
            f"almost_turn_gap: d(w, vbar*(A)) = {d_w:.3e} < e^-gamma = {e_mgamma:.3e}"
        )
    return proj_dist(b @ v, inv2(a) @ w)
