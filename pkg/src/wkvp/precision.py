"""Precision modes and high-precision dense linear algebra.

Three scalar modes are supported:

* ``f64``   — IEEE binary64 (numpy), u = 2^-53.
* ``f128``  — software double-double, u = 2^-106.  (A binary128-equivalent
  accuracy class; the declared unit roundoff is the double-double one.)
* ``mp<d>`` — arbitrary precision with d decimal digits (mpmath), u = 10^-d.

Matrix products above f64 use an error-free splitting scheme: operands are
sliced into limited-significand float64 matrices whose pairwise products are
exact in a standard float64 GEMM, and the slice products are accumulated in
double-double.  The symmetric eigensolver for f128 is a two-sided Jacobi
iteration with a parallel (round-robin) ordering, preconditioned by the f64
eigenbasis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dd
from .dd import DD


class RangeError(ValueError):
    """Non-finite entry encountered while scaling a matrix for splitting."""


class ConditioningError(RuntimeError):
    """Overlap matrix numerically indefinite beyond tolerance."""

    def __init__(self, msg, min_sigma=None):
        super().__init__(msg)
        self.min_sigma = min_sigma


@dataclass(frozen=True)
class PrecisionMode:
    kind: str            # "f64" | "f128" | "mp"
    digits: int | None   # decimal digits for "mp"
    u: float             # unit roundoff

    def __post_init__(self):
        if self.kind == "mp" and (self.digits is None or self.digits < 20):
            raise ValueError("arbitrary precision requires >= 20 decimal digits")

    @property
    def label(self):
        return self.kind if self.kind != "mp" else f"mp{self.digits}"

    @staticmethod
    def parse(s: str) -> "PrecisionMode":
        s = s.strip().lower()
        if s == "f64":
            return F64
        if s == "f128":
            return F128
        if s.startswith("mp"):
            return arbitrary(int(s[2:]))
        raise ValueError(f"unknown precision mode {s!r}")


F64 = PrecisionMode("f64", None, 2.0 ** -53)
F128 = PrecisionMode("f128", None, 2.0 ** -106)


def arbitrary(digits: int) -> PrecisionMode:
    return PrecisionMode("mp", digits, 10.0 ** (-digits))


# ---------------------------------------------------------------------------
# error-free matrix splitting (Ozaki-style)
# ---------------------------------------------------------------------------

class SplitMatrix:
    """A matrix represented as an exact sum of limited-significand slices.

    ``slices[k]`` are float64 arrays; their (exact) sum reconstructs the input
    to the target precision.  ``delta`` is the per-slice significand width in
    bits; scaling is per row (axis=1) or per column (axis=0).
    """

    def __init__(self, slices, delta, axis, shape, target):
        self.slices = slices
        self.delta = delta
        self.axis = axis
        self.shape = shape
        self.target = target

    def reconstruct(self) -> DD:
        acc = DD.zeros(self.shape)
        for s in reversed(self.slices):
            acc = dd.add(acc, DD(s))
        return acc


def _as_dd_matrix(A) -> DD:
    if isinstance(A, DD):
        return A
    return DD(np.asarray(A, dtype=np.float64))


def _slice_count(delta: int, target: PrecisionMode) -> int:
    if target.kind == "f64":
        return max(1, int(np.ceil(54 / delta)))
    if target.kind == "f128":
        return max(2, int(np.ceil(107 / delta)))
    bits = int(np.ceil(target.digits * 3.322)) + 4
    return max(2, int(np.ceil(bits / delta)))


def split(A, target: PrecisionMode, axis: int = 1, inner_dim: int | None = None) -> SplitMatrix:
    """Split a matrix into exactly-representable low-precision slices.

    ``axis=1`` scales per row (left GEMM operand), ``axis=0`` per column.
    ``inner_dim`` is the contraction length the slices must survive exactly;
    it defaults to the matrix extent along ``axis``.
    """
    Add = _as_dd_matrix(A)
    if not (np.all(np.isfinite(Add.hi)) and np.all(np.isfinite(Add.lo))):
        bad = np.argwhere(~(np.isfinite(Add.hi) & np.isfinite(Add.lo)))
        raise RangeError(f"non-finite entry at index {tuple(int(v) for v in bad[0])}")
    if Add.hi.ndim != 2:
        raise ValueError("split expects a 2-D matrix")
    k = inner_dim if inner_dim is not None else Add.hi.shape[axis]
    delta = int((53 - int(np.ceil(np.log2(max(k, 2))))) // 2)
    nmax = _slice_count(delta, target)

    scale_axis = axis
    R = Add.copy()
    slices = []
    amax = float(np.max(np.abs(Add.hi))) if Add.hi.size else 0.0
    if amax == 0.0:
        return SplitMatrix([np.zeros(Add.hi.shape)], delta, axis, Add.hi.shape, target)
    for _ in range(nmax + 2):
        mu = np.max(np.abs(R.hi), axis=scale_axis, keepdims=True)
        if float(np.max(mu)) <= 0.25 * target.u * amax:
            break
        with np.errstate(divide="ignore"):
            e = np.where(mu > 0, np.ceil(np.log2(np.where(mu > 0, mu, 1.0))), 0.0)
        sigma = np.ldexp(1.0, (e + 53 - delta).astype(int))
        chunk = (R.hi + sigma) - sigma
        slices.append(chunk)
        R = dd.add(R, DD(-chunk))
    if not slices:
        slices = [np.zeros(Add.hi.shape)]
    return SplitMatrix(slices, delta, axis, Add.hi.shape, target)


def gemm_hp(A: SplitMatrix | DD | np.ndarray, B: SplitMatrix | DD | np.ndarray,
            target: PrecisionMode):
    """High-precision matrix product via exact slice GEMMs.

    Elementwise error vs the exact product is <= c*n*u*(|A|@|B|) with c <= 4.
    Returns a DD matrix for f64/f128 targets, mpmath matrix for mp targets.
    """
    if target.kind == "mp":
        return _gemm_mp(A, B, target)
    if not isinstance(A, SplitMatrix):
        A = split(A, target, axis=1)
    if not isinstance(B, SplitMatrix):
        B = split(B, target, axis=0, inner_dim=_as_shape(B)[0])
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions mismatch: {A.shape} @ {B.shape}")
    k = A.shape[1]
    need = int(np.ceil(np.log2(max(k, 2))))
    if A.delta + B.delta + need > 53:
        # re-split with a safe width
        A = split(A.reconstruct(), target, axis=1)
        B = split(B.reconstruct(), target, axis=0, inner_dim=k)

    delta_min = min(A.delta, B.delta)
    bits = 54 if target.kind == "f64" else 108
    level_max = int(np.ceil(bits / delta_min)) + 1
    acc = DD.zeros((A.shape[0], B.shape[1]))
    # accumulate in decreasing significance: pair order by i+j
    for level in range(len(A.slices) + len(B.slices) - 1):
        if level > level_max:
            break
        for i in range(len(A.slices)):
            j = level - i
            if 0 <= j < len(B.slices):
                acc = dd.add(acc, DD(A.slices[i] @ B.slices[j]))
    if target.kind == "f64":
        return DD(acc.float())
    return acc


def _as_shape(B):
    if isinstance(B, SplitMatrix):
        return B.shape
    if isinstance(B, DD):
        return B.hi.shape
    return np.asarray(B).shape


def _gemm_mp(A, B, target):
    import mpmath

    mp = mpmath.mp
    with mpmath.workdps(target.digits):
        Am = to_mp_matrix(A)
        Bm = to_mp_matrix(B)
        return Am * Bm


def to_mp_matrix(A):
    import mpmath

    if isinstance(A, SplitMatrix):
        A = A.reconstruct()
    if isinstance(A, DD):
        M = mpmath.matrix(A.hi.tolist())
        L = mpmath.matrix(A.lo.tolist())
        return M + L
    if isinstance(A, mpmath.matrix):
        return A
    A = np.asarray(A)
    if A.dtype == object:
        return mpmath.matrix(A.tolist())
    return mpmath.matrix(A.astype(np.float64).tolist())


def gemm(A, B, mode: PrecisionMode):
    """Convenience product at the given precision for native containers."""
    if mode.kind == "f64":
        return np.asarray(A) @ np.asarray(B)
    if mode.kind == "f128":
        return gemm_hp(_as_dd_matrix(A), _as_dd_matrix(B), mode)
    return _gemm_mp(A, B, mode)


# ---------------------------------------------------------------------------
# double-double symmetric eigensolver (parallel-order Jacobi)
# ---------------------------------------------------------------------------

def _round_robin_pairs(n: int):
    """Round-robin tournament orderings: n-1 rounds of n/2 disjoint pairs."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[i], players[n - 1 - i]) for i in range(n // 2)]
        rounds.append([(min(p, q), max(p, q)) for p, q in pairs])
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh_dd(A: DD, max_sweeps: int = 30, tol: float = 2.0 ** -104,
                   precondition: bool = True):
    """Eigendecomposition of a symmetric DD matrix.

    Returns (w, V) with w ascending (DD vector) and V the DD eigenvector
    matrix (columns).  Deterministic for fixed input.
    """
    n = A.hi.shape[0]
    if n == 1:
        return DD(A.hi[0].copy(), A.lo[0].copy()), DD(np.ones((1, 1)))
    work = A.copy()
    if precondition:
        w0, Q0 = np.linalg.eigh(A.float())
        Q = DD(Q0.copy())
        # two Newton-Bjorck steps: Q <- Q (3I - Q^T Q)/2, defect 1e-15 -> ~1e-60
        for _ in range(2):
            G = gemm_hp(split(Q.T.copy(), F128), split(Q, F128, axis=0), F128)
            corr = dd.add(DD(3.0 * np.eye(n)), -G)
            Q = dd.mul_pow2(gemm_hp(split(Q, F128), split(corr, F128, axis=0), F128), 0.5)
        work = gemm_hp(split(gemm_hp(split(Q.T.copy(), F128), split(work, F128, axis=0), F128),
                             F128), split(Q, F128, axis=0), F128)
        V = Q
    else:
        V = DD(np.eye(n))
    # enforce symmetry of the working matrix
    work = dd.mul_pow2(dd.add(work, work.T.copy()), 0.5)

    pad = n % 2 == 1
    if pad:
        raise ValueError("odd dimension not supported")
    rounds = _round_robin_pairs(n)
    norm = float(np.sqrt(np.sum(work.float() ** 2)))
    thresh = tol * max(norm, 1e-300)

    for sweep in range(max_sweeps):
        off = work.float().copy()
        np.fill_diagonal(off, 0.0)
        offmax = float(np.max(np.abs(off)))
        if offmax <= thresh:
            break
        for pairs in rounds:
            p = np.array([pq[0] for pq in pairs])
            q = np.array([pq[1] for pq in pairs])
            app = work[p, p]
            aqq = work[q, q]
            apq = work[p, q]
            # skip negligible rotations
            active = np.abs(apq.hi) > (tol * 0.01) * np.sqrt(np.abs(app.hi * aqq.hi) + 1e-300)
            if not np.any(active):
                continue
            tau = dd.div(dd.add(aqq, -app), dd.mul_pow2(apq, 2.0))
            # t = sign(tau) / (|tau| + sqrt(1 + tau^2))
            abs_tau = dd.abs_(tau)
            root = dd.sqrt(dd.add(DD(np.ones(tau.shape)), dd.mul(tau, tau)))
            t = dd.div(DD(np.ones(tau.shape)), dd.add(abs_tau, root))
            t = dd.where(tau.hi < 0, -t, t)
            # tau overflow: t -> 1/(2 tau)
            big = ~np.isfinite(tau.hi) | (np.abs(tau.hi) > 1e150)
            if np.any(big):
                with np.errstate(divide="ignore", invalid="ignore"):
                    t_big = dd.div(DD(np.ones(tau.shape)), dd.mul_pow2(tau, 2.0))
                t = dd.where(big, t_big, t)
            t = dd.where(active, t, DD.zeros(t.shape))
            c = dd.div(DD(np.ones(t.shape)), dd.sqrt(dd.add(DD(np.ones(t.shape)), dd.mul(t, t))))
            s = dd.mul(t, c)
            # column update: B = A J
            colp = work[:, p]
            colq = work[:, q]
            new_p = dd.add(dd.mul(colp, DD(c.hi[None, :], c.lo[None, :])),
                           -dd.mul(colq, DD(s.hi[None, :], s.lo[None, :])))
            new_q = dd.add(dd.mul(colp, DD(s.hi[None, :], s.lo[None, :])),
                           dd.mul(colq, DD(c.hi[None, :], c.lo[None, :])))
            work[:, p] = new_p
            work[:, q] = new_q
            # row update: A' = J^T B
            rowp = work[p, :]
            rowq = work[q, :]
            new_rp = dd.add(dd.mul(rowp, DD(c.hi[:, None], c.lo[:, None])),
                            -dd.mul(rowq, DD(s.hi[:, None], s.lo[:, None])))
            new_rq = dd.add(dd.mul(rowp, DD(s.hi[:, None], s.lo[:, None])),
                            dd.mul(rowq, DD(c.hi[:, None], c.lo[:, None])))
            work[p, :] = new_rp
            work[q, :] = new_rq
            # analytic cleanup of the rotated 2x2 block
            tapq = dd.mul(t, apq)
            work[p, p] = dd.add(app, -tapq)
            work[q, q] = dd.add(aqq, tapq)
            zero = DD.zeros(tapq.shape)
            work[p, q] = zero
            work[q, p] = zero
            # eigenvector update
            vp = V[:, p]
            vq = V[:, q]
            V[:, p] = dd.add(dd.mul(vp, DD(c.hi[None, :], c.lo[None, :])),
                             -dd.mul(vq, DD(s.hi[None, :], s.lo[None, :])))
            V[:, q] = dd.add(dd.mul(vp, DD(s.hi[None, :], s.lo[None, :])),
                             dd.mul(vq, DD(c.hi[None, :], c.lo[None, :])))

    w = work[np.arange(n), np.arange(n)]
    order = np.argsort(w.float(), kind="stable")
    return w[order], V[:, order]


def eigh_sym(A, mode: PrecisionMode):
    """Symmetric eigendecomposition at the given precision.

    Returns (w, V) in the mode's native container (ndarray / DD / mp matrix
    converted to (list, mp.matrix)).
    """
    if mode.kind == "f64":
        w, V = np.linalg.eigh(np.asarray(A, dtype=np.float64))
        return w, V
    if mode.kind == "f128":
        return jacobi_eigh_dd(_as_dd_matrix(A))
    import mpmath

    with mpmath.workdps(mode.digits):
        E, Q = mpmath.mp.eigsy(to_mp_matrix(A))
        return E, Q


def convert_matrix(M, target: PrecisionMode):
    """Convert any native matrix container to the target mode's container.

    Conversions into a wider format are exact; narrowing rounds once.
    """
    import mpmath

    if target.kind == "f64":
        if isinstance(M, DD):
            return M.float()
        if isinstance(M, mpmath.matrix):
            return np.array([[float(M[i, j]) for j in range(M.cols)]
                             for i in range(M.rows)], dtype=np.float64)
        A = np.asarray(M)
        return A.astype(np.float64) if A.dtype == object else A
    if target.kind == "f128":
        if isinstance(M, DD):
            return M
        if isinstance(M, mpmath.matrix):
            hi = np.empty((M.rows, M.cols))
            lo = np.empty((M.rows, M.cols))
            for i in range(M.rows):
                for j in range(M.cols):
                    v = M[i, j]
                    h = float(v)
                    hi[i, j] = h
                    lo[i, j] = float(v - h)
            return DD(hi, lo)
        A = np.asarray(M)
        if A.dtype == object:
            hi = A.astype(np.float64)
            lo = np.empty_like(hi)
            for idx in np.ndindex(A.shape):
                lo[idx] = float(A[idx] - mpmath.mpf(float(hi[idx])))
            return DD(hi, lo)
        return DD(A.astype(np.float64))
    # mp target
    return to_mp_matrix(M)
