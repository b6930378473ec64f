"""Asymptotic quantities of affine cocycle families.

Two angle-tracking engines live here.

* A *parameter sweep* engine: for a fixed word, the direction of
  ``A_t^n v`` is followed continuously in ``t`` on an adaptive grid.
  For winding families the lifted angle is monotone in ``t``, which
  turns root isolation and curve-length computation into bracketing on
  a monotone function.

* An *orbit* engine: for fixed ``t`` he projective direction is tracked
  step by step along orbits.  Each step applies a lift of the
  projective action of ``A_t(x)``, normalized through the polar
  decomposition ``A = R(phi) P``: the step displacement is
  ``phi(t) + pull`` where ``phi`` is the rotation angle continued
  continuously in ``t`` (per symbol) and ``|pull| < pi/2`` comes from
  the positive definite factor.  Because the whole lift family is
  jointly continuous in ``(t, direction)``, differences of the tracked
  angle across parameters are intrinsic: they do not depend on any
  branch convention.  The naive per-step convention (increments forced
  into ``(-pi/2, pi/2]``) is also provided for cross-checks; it is only
  reliable where single-step moves stay below pi/2.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .base import BernoulliBase, TorusBase, WordEnumerator
from .errors import BracketFailure, NumericsError, ValidationError
from .family import AffineFamily, iterate, iterate_matrix, matrix_polynomial
from .mat2 import operator_norm, singular_frame, unit, wedge

__all__ = [
    "ProjAngle",
    "ScalarEstimate",
    "DirectionCurve",
    "angle_lift",
    "lyapunov",
    "lyapunov_exact",
    "lyapunov_rank1_exact",
    "rotation_number",
    "rotation_lift_ensemble",
    "winding_speed",
    "winding_speed_n",
    "winding_length",
    "winding_length_real_line",
    "uh_probe",
]

_TWO_PI = 2.0 * math.pi


def _wrap_pi(x):
    """Wrap to [-pi, pi)."""
    return (x + math.pi) % _TWO_PI - math.pi


def _wrap_half_pi(x):
    """Projective branch: representative of x mod pi in (-pi/2, pi/2]."""
    w = (x + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    return np.where(w == -0.5 * math.pi, 0.5 * math.pi, w)


def _opnorm_any(m) -> float:
    """Largest singular value of a real or complex 2x2."""
    g = (m.conj().T @ m).real if np.iscomplexobj(m) else m.T @ m
    half_tr = 0.5 * (g[0, 0] + g[1, 1])
    off = abs(m[0, 0].conjugate() * m[0, 1] + m[1, 0].conjugate() * m[1, 1]) if np.iscomplexobj(m) else g[0, 1]
    delta = math.hypot(0.5 * (g[0, 0] - g[1, 1]), abs(off))
    return math.sqrt(max(half_tr + delta, 0.0))


@dataclass
class ProjAngle:
    """Projective point as a continuously lifted angle (not reduced mod pi)."""

    theta: float
    flagged: bool = False

    @property
    def reduced(self) -> float:
        return self.theta % math.pi

    def lift_step(self, delta: float) -> "ProjAngle":
        """Advance the lift; moves of pi/2 or more per elementary step are flagged."""
        flagged = self.flagged or abs(delta) >= 0.5 * math.pi
        return ProjAngle(self.theta + delta, flagged)


@dataclass(frozen=True)
class ScalarEstimate:
    value: float
    std_error: float
    n_steps: int
    n_samples: int

    def __repr__(self):
        return f"{self.value:.10g} +/- {self.std_error:.3g} (n={self.n_steps}, samples={self.n_samples})"


# ---------------------------------------------------------------------------
# parameter-sweep engine


class DirectionCurve:
    """Unit direction of A_t^n(x) v as a function of real t, batch-evaluable.

    Words up to the coefficient guard use the expanded matrix polynomial
    (one Horner pass per batch); longer words re-iterate the renormalized
    product at every requested t.  Both backends return the exact
    direction of the product vector (positive rescaling only), so signs
    of inner products against a fixed covector are meaningful.
    """

    def __init__(self, family: AffineFamily, word, v, coeff_max: int = 40):
        self.a, self.b = family.word_factors(word)
        self.n = self.a.shape[0]
        self.v = unit(np.asarray(v, dtype=float))
        if self.n <= coeff_max:
            poly = matrix_polynomial(family, word)
            self._vec_coeffs = np.einsum("kij,j->ki", poly.coeffs, self.v)
            self._scale = poly.scale_log
        else:
            self._vec_coeffs = None

    def __call__(self, ts):
        """(dirs, log_norms) at the given parameter values."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self._vec_coeffs is not None:
            c = self._vec_coeffs  # (n+1, 2)
            out = np.broadcast_to(c[-1], (ts.size, 2)).copy()
            for k in range(c.shape[0] - 2, -1, -1):
                out = out * ts[:, None] + c[k]
            nrm = np.linalg.norm(out, axis=1)
            if np.any(nrm == 0.0):
                raise NumericsError("direction curve hit an exact zero vector")
            return out / nrm[:, None], np.log(nrm) + self._scale
        u = np.broadcast_to(self.v, (ts.size, 2)).copy()
        logs = np.zeros(ts.size)
        for j in range(self.n):
            u = u @ self.a[j].T + ts[:, None] * (u @ self.b[j].T)
            nrm = np.linalg.norm(u, axis=1)
            if np.any(nrm == 0.0):
                raise NumericsError("direction curve hit an exact zero vector")
            u /= nrm[:, None]
            logs += np.log(nrm)
        return u, logs


def _forward_move(d0, d1):
    """Signed vector-angle move from rows of d0 to rows of d1, in (-pi, pi].

    The direction vector of a winding product has nonnegative angular
    velocity (its derivative formula matches the projective speed), so a
    true per-cell move below pi is measured exactly; moves of pi..2pi
    alias to negative values, which callers treat as a refinement
    signal.  Working at vector level (never mod pi) is what keeps
    near-pi whips, where the product norm dips, visible.
    """
    cross = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
    dot = d0[:, 0] * d1[:, 0] + d0[:, 1] * d1[:, 1]
    return np.arctan2(cross, dot)


def _tan_grid(t_lo, t_hi, m, scale=2.0):
    """Grid dense near 0 and sparse in the tails (atan-distributed).

    Affine direction curves move like atan(t / scale), so this spacing
    keeps the per-cell projective motion roughly uniform even when the
    window is many orders of magnitude wider than the active region.
    """
    u_lo, u_hi = math.atan(t_lo / scale), math.atan(t_hi / scale)
    ts = scale * np.tan(np.linspace(u_lo, u_hi, m))
    ts[0], ts[-1] = t_lo, t_hi
    return np.unique(ts)


def _dip_ladder(ts, logs, dip_gate: float = 0.25):
    """Refinement points around norm dips, geometrically spaced.

    A deep local minimum of log ||A_t^n v|| marks a parameter where v
    nearly aligns with the contracted direction of the frozen product;
    there the direction whips through almost pi within a window of
    width roughly exp(min - shoulder) * cell.  Midpoint subdivision
    alone cannot expose such a spike (the measured move stays small and
    split-consistent), so a ladder of points at scales w, 2w, 4w, ...
    around each dip is forced into the grid.
    """
    out = []
    for i in range(1, ts.size - 1):
        if not (logs[i] < logs[i - 1] and logs[i] < logs[i + 1]):
            continue
        shoulder = max(logs[i - 1], logs[i + 1])
        depth = shoulder - logs[i]
        if depth < dip_gate:
            continue
        cell = min(ts[i] - ts[i - 1], ts[i + 1] - ts[i])
        w = cell * math.exp(-depth)
        if cell <= 4.0 * w or w == 0.0:
            continue  # dip already resolved at its own scale
        scales = w * 2.0 ** np.arange(0.0, max(2.0, math.ceil(depth / math.log(2.0)) + 2.0))
        cand = np.concatenate([ts[i] - scales, ts[i] + scales])
        cand = cand[(cand > ts[i - 1]) & (cand < ts[i + 1])]
        out.append(cand)
    if not out:
        return np.empty(0)
    return np.concatenate(out)


def angle_lift(curve, t_lo, t_hi, init_points=None, max_move=1.2, max_rounds=400):
    """Monotone lifted vector angle of a positively winding direction curve.

    Returns ``(ts, psi, dirs)`` with ``psi`` the continuous lift of the
    direction-vector angle over ``[t_lo, t_hi]`` (``psi[0]`` reduced to
    [0, pi); the projective lift and the vector lift coincide up to that
    normalization).  Cells are refined when the measured move exceeds
    ``max_move`` or is negative (a negative vector move is impossible
    and signals a move aliased past pi); norm dips get geometric
    ladders; a final verification round splits every cell and demands
    half-move additivity.  A cell can only cheat all three checks by
    hiding an exact multiple of 2 pi, and the kept verification
    midpoints keep halving such cells until the surplus surfaces, so the
    accepted per-cell moves are exact up to rounding: the lift carries
    no quadrature error.
    """
    m0 = init_points if init_points is not None else 65
    ts = _tan_grid(t_lo, t_hi, m0)
    dirs, logs = curve(ts)
    neg_tol = -1e-9

    def insert(new_ts):
        nonlocal ts, dirs, logs
        new_ts = np.unique(new_ts)
        keep = ~np.isin(new_ts, ts)
        new_ts = new_ts[keep]
        if new_ts.size == 0:
            return False
        nd, nl = curve(new_ts)
        idx = np.searchsorted(ts, new_ts)
        ts = np.insert(ts, idx, new_ts)
        dirs = np.insert(dirs, idx, nd, axis=0)
        logs = np.insert(logs, idx, nl)
        return True

    for _ in range(max_rounds):
        moves = _forward_move(dirs[:-1], dirs[1:])
        bad = (moves > max_move) | (moves < neg_tol)
        if bad.any():
            if not insert(0.5 * (ts[:-1] + ts[1:])[bad]):
                break  # cells at float resolution; accept as-is
            continue
        ladder = _dip_ladder(ts, logs)
        if ladder.size and insert(ladder):
            continue
        # verification round: split every cell, keep the midpoints
        mids = 0.5 * (ts[:-1] + ts[1:])
        dm, dl = curve(mids)
        left = _forward_move(dirs[:-1], dm)
        right = _forward_move(dm, dirs[1:])
        consistent = (np.abs(left + right - moves) < 1e-9).all()
        new_ts = np.empty(ts.size + mids.size)
        new_ts[0::2] = ts
        new_ts[1::2] = mids
        new_dirs = np.empty((new_ts.size, 2))
        new_dirs[0::2] = dirs
        new_dirs[1::2] = dm
        new_logs = np.empty(new_ts.size)
        new_logs[0::2] = logs
        new_logs[1::2] = dl
        ts, dirs, logs = new_ts, new_dirs, new_logs
        if consistent:
            new_moves = np.empty(ts.size - 1)
            new_moves[0::2] = left
            new_moves[1::2] = right
            if not ((new_moves > max_move) | (new_moves < neg_tol)).any() and not _dip_ladder(
                ts, logs
            ).size:
                psi = np.concatenate(
                    [[math.atan2(dirs[0, 1], dirs[0, 0]) % math.pi], np.cumsum(np.maximum(new_moves, 0.0))]
                )
                psi[1:] += psi[0]
                return ts, psi, dirs
    raise BracketFailure(
        f"angle_lift failed to resolve the direction curve in {max_rounds} refinement rounds"
    )


# ---------------------------------------------------------------------------
# orbit engine (fixed t, step-by-step tracking)


def _polar_angle_principal(a, b, ts):
    """Rotation angle of the polar factor of A + t B at each t, in (-pi, pi]."""
    y = (a[1, 0] - a[0, 1]) + ts * (b[1, 0] - b[0, 1])
    x = (a[0, 0] + a[1, 1]) + ts * (b[0, 0] + b[1, 1])
    return np.arctan2(y, x)


def _unwrap_on_path(fun, ts, anchor: float = 0.0, max_step: float = 0.5, max_rounds: int = 50):
    """Continuous lift of a smooth angle curve, anchored at its principal
    value at ``anchor``; returns lifted values at the requested ts."""
    ts = np.asarray(ts, dtype=float)
    path = np.unique(np.concatenate([ts, [anchor]]))
    vals = fun(path)
    for _ in range(max_rounds):
        d = _wrap_pi(np.diff(vals))
        bad = np.abs(d) > max_step
        if not bad.any():
            break
        mids = 0.5 * (path[:-1] + path[1:])[bad]
        vm = fun(mids)
        idx = np.searchsorted(path, mids)
        path = np.insert(path, idx, mids)
        vals = np.insert(vals, idx, vm)
    else:
        raise NumericsError("polar-angle unwrap did not stabilize")
    d = _wrap_pi(np.diff(vals))
    k0 = int(np.searchsorted(path, anchor))
    lift = np.empty_like(vals)
    lift[k0] = vals[k0]
    lift[k0 + 1 :] = vals[k0] + np.cumsum(d[k0:])
    lift[:k0] = vals[k0] - np.cumsum(d[:k0][::-1])[::-1]
    pos = np.searchsorted(path, ts)
    return lift[pos]


class _StepTables:
    """Per-symbol data for the orbit engine at a sorted t-grid."""

    def __init__(self, family: AffineFamily, ts):
        ts = np.asarray(ts, dtype=float)
        a, e = family.a_mats, family.e_mats
        bm = family.b_mats
        kappa = a.shape[0]
        self.ts = ts
        self.a11 = np.stack([a[s, 0, 0] + ts * bm[s, 0, 0] for s in range(kappa)])
        self.a12 = np.stack([a[s, 0, 1] + ts * bm[s, 0, 1] for s in range(kappa)])
        self.a21 = np.stack([a[s, 1, 0] + ts * bm[s, 1, 0] for s in range(kappa)])
        self.a22 = np.stack([a[s, 1, 1] + ts * bm[s, 1, 1] for s in range(kappa)])
        self.phi_p = np.stack([_polar_angle_principal(a[s], bm[s], ts) for s in range(kappa)])
        self.phi_l = np.stack(
            [
                _unwrap_on_path(lambda x, s=s: _polar_angle_principal(a[s], bm[s], x), ts)
                for s in range(kappa)
            ]
        )


def rotation_lift_ensemble(
    family: AffineFamily,
    orbits,
    ts,
    v0=None,
    convention: str = "polar",
):
    """Lifted-angle increments u_n - u_0, shape (samples, len(ts)).

    ``orbits`` is a (samples, n) symbol array (Bernoulli) or phase array
    (torus).  The same orbit drives every t (common random numbers), so
    per-orbit increments across t are exactly the curve lengths of the
    parameter sweep and are nonnegative for positively winding families.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    order = np.argsort(ts)
    ts_sorted = ts[order]
    orbits = np.asarray(orbits)
    if orbits.ndim == 1:
        orbits = orbits[None, :]
    s_count, n = orbits.shape
    if v0 is None:
        u0 = 0.0
    else:
        v0 = np.asarray(v0, dtype=float)
        u0 = math.atan2(v0[1], v0[0])
    u = np.full((s_count, ts_sorted.size), u0)

    if family.locally_constant:
        tab = _StepTables(family, ts_sorted)
        syms = orbits.astype(np.int64)
        for j in range(n):
            col = syms[:, j]
            for s in range(family.kappa):
                rows = np.nonzero(col == s)[0]
                if rows.size == 0:
                    continue
                us = u[rows]
                c, si = np.cos(us), np.sin(us)
                y1 = tab.a11[s] * c + tab.a12[s] * si
                y2 = tab.a21[s] * c + tab.a22[s] * si
                yang = np.arctan2(y2, y1)
                if convention == "polar":
                    pull = _wrap_pi(yang - tab.phi_p[s] - us)
                    u[rows] = us + tab.phi_l[s] + pull
                elif convention == "halfstep":
                    step = _wrap_half_pi(yang - us)
                    u[rows] = us + step
                else:
                    raise ValidationError(f"unknown angle convention {convention!r}")
    else:
        for j in range(n):
            xs = orbits[:, j]
            amat = np.stack([family.a_of(x) for x in xs])  # (S, 2, 2)
            bmat = np.stack([family.b_of(x) for x in xs])
            a11 = amat[:, 0, 0, None] + ts_sorted * bmat[:, 0, 0, None]
            a12 = amat[:, 0, 1, None] + ts_sorted * bmat[:, 0, 1, None]
            a21 = amat[:, 1, 0, None] + ts_sorted * bmat[:, 1, 0, None]
            a22 = amat[:, 1, 1, None] + ts_sorted * bmat[:, 1, 1, None]
            c, si = np.cos(u), np.sin(u)
            y1 = a11 * c + a12 * si
            y2 = a21 * c + a22 * si
            yang = np.arctan2(y2, y1)
            if convention == "polar":
                phi_p = np.arctan2(
                    (amat[:, 1, 0, None] - amat[:, 0, 1, None])
                    + ts_sorted * (bmat[:, 1, 0, None] - bmat[:, 0, 1, None]),
                    (amat[:, 0, 0, None] + amat[:, 1, 1, None])
                    + ts_sorted * (bmat[:, 0, 0, None] + bmat[:, 1, 1, None]),
                )
                phi_l = np.unwrap(phi_p, axis=1)
                pull = _wrap_pi(yang - phi_p - u)
                u = u + phi_l + pull
            elif convention == "halfstep":
                u = u + _wrap_half_pi(yang - u)
            else:
                raise ValidationError(f"unknown angle convention {convention!r}")

    out = np.empty_like(u)
    out[:, order] = u - u0
    return out


def rotation_number(
    family: AffineFamily,
    t,
    n: int,
    samples: int = 32,
    convention: str = "polar",
    v0=None,
    stream0: int = 0,
) -> ScalarEstimate:
    """Fibered rotation number estimate (lift_n - lift_0) / (pi n).

    The additive constant depends on the lift normalization (anchored at
    t = 0); only differences of rotation numbers are intrinsic.
    """
    orbits = _sample_orbits(family, n, samples, stream0)
    lifts = rotation_lift_ensemble(family, orbits, [t], v0=v0, convention=convention)[:, 0]
    vals = lifts / (math.pi * n)
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return ScalarEstimate(float(vals.mean()), se, n, samples)


def rotation_numbers_on_grid(
    family: AffineFamily,
    ts,
    n: int,
    samples: int = 32,
    convention: str = "polar",
    stream0: int = 0,
):
    """Rotation-number estimates on a t grid sharing orbits across t.

    Returns (values, std_errors) arrays aligned with ``ts``.
    """
    orbits = _sample_orbits(family, n, samples, stream0)
    lifts = rotation_lift_ensemble(family, orbits, ts, convention=convention)
    vals = lifts / (math.pi * n)
    se = vals.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(vals.shape[1])
    return vals.mean(axis=0), se


def _sample_orbits(family: AffineFamily, n: int, samples: int, stream0: int = 0):
    base = family.base
    if isinstance(base, (BernoulliBase, TorusBase)):
        return np.stack([base.sample_orbit(n, stream=stream0 + k) for k in range(samples)])
    raise ValidationError("family base does not support orbit sampling")


# ---------------------------------------------------------------------------
# Lyapunov exponents


def _lyapunov_chunk(family, t, n, burn_in, stream_lo, stream_hi):
    base = family.base
    complex_t = bool(np.iscomplexobj(t)) and complex(t).imag != 0
    tval = complex(t) if complex_t else float(np.real(t))
    samples = stream_hi - stream_lo
    if family.locally_constant:
        orbits = np.stack(
            [base.sample_orbit(n, stream=stream_lo + k) for k in range(samples)]
        )
        u = np.zeros((samples, 2), dtype=complex if complex_t else float)
        u[:, 0] = 1.0
        logs = np.zeros(samples)
        burn_logs = np.zeros(samples)
        a, bm = family.a_mats, family.b_mats
        for j in range(n):
            col = orbits[:, j]
            for s in range(family.kappa):
                rows = np.nonzero(col == s)[0]
                if rows.size == 0:
                    continue
                us = u[rows]
                u[rows] = us @ a[s].T + tval * (us @ bm[s].T)
            nrm = np.sqrt(np.abs(u[:, 0]) ** 2 + np.abs(u[:, 1]) ** 2)
            u /= nrm[:, None]
            logs += np.log(nrm)
            if j + 1 == burn_in:
                burn_logs[:] = logs
        return (logs - burn_logs) / (n - burn_in)
    vals = np.empty(samples)
    for k in range(samples):
        orbit = base.sample_orbit(n, stream=stream_lo + k)
        res = iterate(family, orbit, t, keep_steps=burn_in > 0)
        if burn_in > 0:
            vals[k] = res.step_log_norms[burn_in:].sum() / (n - burn_in)
        else:
            vals[k] = res.log_norm / n
    return vals


def lyapunov(
    family: AffineFamily,
    t,
    n: int,
    samples: int = 32,
    stream0: int = 0,
    burn_in: int = 0,
    workers: int = 1,
) -> ScalarEstimate:
    """Top Lyapunov exponent by renormalized vector tracking.

    Averages (1/(n - burn_in)) log ||A_t^n v|| over independent orbits;
    ``burn_in`` discards the initial alignment transient (0 keeps the
    plain Kingman average).  Deterministic for fixed (seed, stream0,
    samples) regardless of ``workers``.
    """
    if n < 1:
        raise ValidationError("lyapunov requires n >= 1")
    if burn_in >= n:
        raise ValidationError("burn_in must be smaller than n")
    bounds = np.linspace(stream0, stream0 + samples, min(workers, samples) + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(chunks) == 1:
        vals = _lyapunov_chunk(family, t, n, burn_in, *chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            futs = [pool.submit(_lyapunov_chunk, family, t, n, burn_in, lo, hi) for lo, hi in chunks]
            vals = np.concatenate([f.result() for f in futs])
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return ScalarEstimate(float(vals.mean()), se, n, samples)


def lyapunov_exact(family: AffineFamily, t, n: int) -> float:
    """Exact finite-n average of (1/n) log ||A_t^n|| over all words.

    Brute-force oracle; the expectation of the Monte Carlo estimator at
    matrix-norm level.  Guarded by the enumeration budget.
    """
    if not family.locally_constant:
        raise ValidationError("exact enumeration needs a locally constant family")
    enum = WordEnumerator(family.base.probs, n)
    words = enum.words()
    weights = enum.weights()
    complex_t = bool(np.iscomplexobj(t)) and complex(t).imag != 0
    tval = complex(t) if complex_t else float(np.real(t))
    w_count = words.shape[0]
    m = np.zeros((w_count, 2, 2), dtype=complex if complex_t else float)
    m[:, 0, 0] = 1.0
    m[:, 1, 1] = 1.0
    logs = np.zeros(w_count)
    a, bm = family.a_mats, family.b_mats
    for j in range(n):
        col = words[:, j]
        fac = a[col] + tval * bm[col]
        m = np.einsum("kij,kjl->kil", fac, m)
        s = np.abs(m).reshape(w_count, 4).max(axis=1)
        m /= s[:, None, None]
        logs += np.log(s)
    # closed-form operator norm per word
    g = np.einsum("kji,kjl->kil", m.conj(), m).real
    half_tr = 0.5 * (g[:, 0, 0] + g[:, 1, 1])
    delta = np.sqrt(np.maximum((0.5 * (g[:, 0, 0] - g[:, 1, 1])) ** 2 + np.abs(g[:, 0, 1]) ** 2, 0.0))
    opn = np.sqrt(np.maximum(half_tr + delta, 0.0))
    return float(np.sum(weights * (logs + np.log(opn))) / n)


def lyapunov_rank1_exact(family: AffineFamily) -> float:
    """Closed-form L1(B) for rank-one B = A E over a Bernoulli base.

    Writes B_j = v_j w_j^t with |v_j| = 1 and returns
    sum_{i,j} p_i p_j log |<w_i, v_j>|, the almost-sure growth rate of
    (1/n) log ||B^n||.  Rejects rank-two data and vanishing chains.
    """
    if not family.locally_constant or not isinstance(family.base, BernoulliBase):
        raise ValidationError("rank-one closed form needs a Bernoulli locally constant family")
    p = np.asarray(family.base.probs)
    vs, ws = [], []
    for j, bm in enumerate(family.b_mats):
        fr = singular_frame(bm)
        if fr.conorm > 1e-10 * fr.norm:
            raise ValidationError(f"B is not rank one at symbol {j} (conorm/norm = {fr.conorm / fr.norm:.2e})")
        vs.append(fr.vbar_star)
        ws.append(fr.norm * fr.vbar)
    total = 0.0
    for i, wi in enumerate(ws):
        for j, vj in enumerate(vs):
            dot = abs(float(wi @ vj))
            if dot == 0.0:
                raise ValidationError(
                    f"chain product vanishes: <w_{i}, v_{j}> = 0 (B(Tx) B(x) = 0 on a cylinder)"
                )
            total += p[i] * p[j] * math.log(dot)
    return float(total)


# ---------------------------------------------------------------------------
# winding speed / length


def winding_speed(family: AffineFamily, x, t: float, v) -> float:
    """d/dt of the projective point of A_t(x) v: ((A_t v) ^ (B v)) / |A_t v|^2."""
    v = unit(np.asarray(v, dtype=float))
    at = family.evaluate(x, t)
    bv = family.b_of(x) @ v
    atv = at @ v
    return float(wedge(atv, bv) / (atv[0] ** 2 + atv[1] ** 2))


def winding_speed_n(
    family: AffineFamily, orbit, t: float, v, method: str = "both", rtol: float = 1e-8
) -> float:
    """n-step winding speed (M_t v ^ d/dt M_t v) / |M_t v|^2 along a word.

    ``direct`` differentiates the product with the forward product rule
    (y, y') recursion, renormalizing both jointly; ``summation`` uses the
    per-step decomposition weighted by partial norms and determinants.
    With ``both`` the two are cross-checked to ``rtol``.
    """
    a, bm = family.word_factors(orbit)
    v = unit(np.asarray(v, dtype=float))

    def direct():
        y = v.copy()
        d = np.zeros(2)
        for j in range(a.shape[0]):
            fac = a[j] + t * bm[j]
            y, d = fac @ y, fac @ d + bm[j] @ y
            s = math.hypot(y[0], y[1])
            y, d = y / s, d / s
        return wedge(y, d)  # |y| = 1 after the final rescale

    def summation():
        n = a.shape[0]
        u = v.copy()
        logr = np.zeros(n + 1)
        qs = np.zeros(n)
        dets = np.zeros(n)
        for j in range(n):
            fac = a[j] + t * bm[j]
            y = fac @ u
            ny = math.hypot(y[0], y[1])
            qs[j] = wedge(y, bm[j] @ u) / ny**2
            dets[j] = fac[0, 0] * fac[1, 1] - fac[0, 1] * fac[1, 0]
            logr[j + 1] = logr[j] + math.log(ny)
            u = y / ny
        log_det_suffix = np.concatenate([np.cumsum(np.log(np.abs(dets[::-1])))[::-1][1:], [0.0]])
        sign_suffix = np.concatenate([np.cumprod(np.sign(dets[::-1]))[::-1][1:], [1.0]])
        terms = sign_suffix * np.exp(log_det_suffix + 2.0 * (logr[1:] - logr[-1])) * qs
        return float(terms.sum())

    if method == "direct":
        return float(direct())
    if method == "summation":
        return summation()
    d_val, s_val = float(direct()), summation()
    scale = max(abs(d_val), abs(s_val), 1e-300)
    if abs(d_val - s_val) > rtol * scale + 1e-13:
        raise NumericsError(
            f"winding_speed_n routes disagree: direct={d_val!r} summation={s_val!r}"
        )
    return d_val


def winding_length(
    family: AffineFamily,
    orbit,
    v,
    j_interval,
    rtol: float = 1e-6,
    max_depth: int = 30,
) -> float:
    """Length of the projective curve t -> A_t^n(x) v over a compact interval.

    Adaptive Simpson quadrature of the (nonnegative) n-step winding
    speed, with pre-splitting at detected speed zeros; refinement stops
    when the Richardson defect of a cell is below the scaled tolerance.
    """
    lo, hi = float(j_interval[0]), float(j_interval[1])
    if hi <= lo:
        raise ValidationError("winding_length needs a nondegenerate interval")
    a, bm = family.word_factors(orbit)
    v = unit(np.asarray(v, dtype=float))

    def speed(t):
        y = v.copy()
        d = np.zeros(2)
        for j in range(a.shape[0]):
            fac = a[j] + t * bm[j]
            y, d = fac @ y, fac @ d + bm[j] @ y
            s = math.hypot(y[0], y[1])
            y, d = y / s, d / s
        return abs(wedge(y, d))

    # pre-split at near-zeros of the speed (isolated for semidefinite winding)
    probe = np.linspace(lo, hi, 65)
    pv = np.array([speed(t) for t in probe])
    knots = [lo]
    vmax = pv.max()
    for i in range(1, 64):
        if pv[i] <= 1e-6 * (vmax + 1e-300) and pv[i] <= pv[i - 1] and pv[i] <= pv[i + 1]:
            knots.append(probe[i])
    knots.append(hi)

    crude = np.trapezoid(pv, probe)
    tol = rtol * (crude + 1.0)

    def simpson(f, x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def adapt(x0, x2, f0, f1, f2, whole, depth, tol_seg):
        x1 = 0.5 * (x0 + x2)
        lm = 0.5 * (x0 + x1)
        rm = 0.5 * (x1 + x2)
        flm, frm = speed(lm), speed(rm)
        left = simpson(speed, x0, x1, f0, flm, f1)
        right = simpson(speed, x1, x2, f1, frm, f2)
        if depth >= max_depth:
            return left + right
        if depth >= 3 and abs(left + right - whole) <= 15.0 * tol_seg:
            return left + right + (left + right - whole) / 15.0
        return adapt(x0, x1, f0, flm, f1, left, depth + 1, 0.5 * tol_seg) + adapt(
            x1, x2, f1, frm, f2, right, depth + 1, 0.5 * tol_seg
        )

    total = 0.0
    for k in range(len(knots) - 1):
        x0, x2 = knots[k], knots[k + 1]
        x1 = 0.5 * (x0 + x2)
        f0, f1, f2 = speed(x0), speed(x1), speed(x2)
        whole = simpson(speed, x0, x2, f0, f1, f2)
        total += adapt(x0, x2, f0, f1, f2, whole, 0, tol * (x2 - x0) / (hi - lo))
    return total


def winding_length_real_line(
    family: AffineFamily,
    orbit,
    v,
    tail_tol: float = 1e-4,
    t_start: float = 8.0,
    max_grow: int = 12,
):
    """Total curve length over t in R, as sweep over [-T, T] plus tail angles.

    As |t| grows the direction converges monotonically to that of the
    leading-coefficient image B_n ... B_1 v, so each tail contributes
    the forward angle to that limit.  T is grown until both tails are
    below ``tail_tol``.  Returns (length, T).
    """
    a, bm = family.word_factors(orbit)
    v = unit(np.asarray(v, dtype=float))
    limit = v.copy()
    for j in range(bm.shape[0]):
        limit = bm[j] @ limit
        s = math.hypot(limit[0], limit[1])
        if s == 0.0:
            raise ValidationError("B_n ... B_1 v = 0: the real-line length is below n pi")
        limit = limit / s
    curve = DirectionCurve(family, orbit, v)
    n = a.shape[0]
    limit_lo = limit if n % 2 == 0 else -limit
    t_cap = t_start
    for _ in range(max_grow):
        d_hi, _ = curve(np.array([t_cap]))
        d_lo, _ = curve(np.array([-t_cap]))
        tail_hi = max(float(_forward_move(d_hi, limit[None, :])[0]), 0.0)
        tail_lo = max(float(_forward_move(limit_lo[None, :], d_lo)[0]), 0.0)
        if tail_hi < tail_tol and tail_lo < tail_tol:
            break
        t_cap *= 2.0
    _, psi, _ = angle_lift(curve, -t_cap, t_cap, init_points=max(129, 8 * n + 1))
    return float(psi[-1] - psi[0] + tail_hi + tail_lo), t_cap


# ---------------------------------------------------------------------------
# uniform hyperbolicity probe


@dataclass(frozen=True)
class UHProbeResult:
    min_growth_rate: float
    verdict: bool
    threshold: float


def uh_probe(
    family: AffineFamily,
    t,
    n: int = 10**4,
    samples: int = 16,
    threshold: float = 0.02,
    stream0: int = 0,
) -> UHProbeResult:
    """Heuristic uniform-hyperbolicity indicator (never a certificate).

    Minimum of (1/n) log ||A_t^n(x)|| over sampled orbits *plus* the
    constant-symbol words, which catch parabolic elements that random
    sampling essentially never visits.
    """
    rates = []
    if family.locally_constant:
        for s in range(family.kappa):
            orbit = np.full(n, s, dtype=np.int64)
            m, log_scale = iterate_matrix(family, orbit, t)
            rates.append((log_scale + math.log(_opnorm_any(m))) / n)
    base = family.base
    for k in range(samples):
        orbit = base.sample_orbit(n, stream=stream0 + k)
        m, log_scale = iterate_matrix(family, orbit, t)
        rates.append((log_scale + math.log(_opnorm_any(m))) / n)
    mg = float(min(rates))
    return UHProbeResult(mg, mg >= threshold, threshold)
