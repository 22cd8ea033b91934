"""Closed-form radial integrals over Gaussian primitives.

Everything reduces to moment integrals M(n, s) = int_0^inf r^n e^(-s r^2) dr,
erf/erfc-weighted moments, and the two-center radial Coulomb kernel

    K(n1, s; n2, t) = int int r1^n1 e^(-s r1^2) (1/r_>) r2^n2 e^(-t r2^2) dr1 dr2.

The kernel is evaluated by a subtraction-controlled recursion whose bases are
elementary (atan / square roots) plus one incomplete-beta style series; the
same algorithm runs in float64, double-double, or mpmath via the backend
layer.  Worst-case cancellation along the recursion is a few decimal digits,
which the oracle tests bound explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backends import get_backend
from .constants import fm_to_a0
from .precision import F64, PrecisionMode

_BETA_RATIO_CACHE: dict = {}


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Primitive:
    """Normalized radial Gaussian N r^p e^(-zeta r^2)."""

    zeta: float
    p: int

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("exponent must be positive")
        if self.p < 1:
            raise ValueError("radial power must be >= 1")

    @property
    def norm(self) -> float:
        return 1.0 / np.sqrt(moment(2 * self.p, 2.0 * self.zeta, get_backend(F64)))


NUCLEAR_FAMILIES = ("point", "gaussian", "shell", "ball")


@dataclass(frozen=True)
class NuclearModel:
    """Nuclear charge Z and normalized charge-distribution family.

    ``rn_fm`` is the rms radius in fm; for the uniform ball the hard radius is
    R0 = rn*sqrt(5/3).  Z may be negative (used internally by the charge-
    conjugation cross-checks).
    """

    z: float
    family: str = "point"
    rn_fm: float = 0.0

    def __post_init__(self):
        if self.family not in NUCLEAR_FAMILIES:
            raise ValueError(f"unknown nuclear family {self.family!r}")
        if self.family != "point" and self.rn_fm <= 0:
            raise ValueError("extended nuclear models need rn > 0")

    @property
    def rn_a0(self) -> float:
        return fm_to_a0(self.rn_fm)

    def with_charge(self, z) -> "NuclearModel":
        return NuclearModel(z, self.family, self.rn_fm)


# ---------------------------------------------------------------------------
# elementary moments
# ---------------------------------------------------------------------------

def moment(n: int, s, B):
    """M(n, s) = Gamma((n+1)/2) / (2 s^((n+1)/2)) for n >= 0."""
    gh = B.gamma_half(n + 1)
    return gh / (B.pow_half(s, n + 1) * 2.0)


def moment_diff(n: int, t, s, B):
    """M(n, t) - M(n, s+t), stable for s << t."""
    p2 = n + 1  # power is p2/2
    gh = B.gamma_half(n + 1)
    # t^-p (1 - (1 + s/t)^-p) = t^-p * (-expm1(-p*log1p(s/t)))
    ratio = s / t
    val = -B.expm1(B.log1p(ratio) * (-(p2 / 2.0)))
    return gh / B.pow_half(t, p2) * val * 0.5


# ---------------------------------------------------------------------------
# J integrals: J_m(a, b) = int_0^sqrt(b) (a + u^2)^(-m) du   (m = m2/2)
# ---------------------------------------------------------------------------

def j_lower(m2: int, a, b, B):
    """Upward recursion, all positive terms; bases atan (even m2) or algebraic."""
    if m2 < 2:
        raise ValueError("m2 >= 2 required")
    rb = B.sqrt(b)
    apb = a + b
    if m2 % 2 == 0:
        m = 1.0
        J = B.atan(B.sqrt(b / a)) / B.sqrt(a)
    else:
        m = 1.5
        J = rb / (a * B.sqrt(apb))
    while m2 > 2 * m:
        J = (rb / B.pow_half(apb, int(2 * m)) + J * (2 * m - 1)) / (a * (2 * m))
        m += 1.0
    return J


def j_infinite(m2: int, a, B):
    """int_0^inf (a+u^2)^(-m) du = (sqrt(pi)/2) Gamma(m-1/2)/(Gamma(m) a^(m-1/2))."""
    c = B.gamma_half(m2 - 1) / B.gamma_half(m2)
    return B.sqrt_pi * c / (B.pow_half(a, m2 - 1) * 2.0)


def _beta_ratios(m2: int, nterms: int, B):
    """Coefficients (m+k)/(m+1/2+k) = (m2+2k)/(m2+1+2k) of the 2F1 series,
    exact at the backend's precision."""
    key = (m2, nterms, B.kind, getattr(B, "dps", None))
    if key not in _BETA_RATIO_CACHE:
        _BETA_RATIO_CACHE[key] = [
            B.asarray(float(m2 + 2 * k)) / B.asarray(float(m2 + 1 + 2 * k))
            for k in range(nterms)]
    return _BETA_RATIO_CACHE[key]


def _gather(x, idx, B):
    if B.kind == "f128":
        flat = x.ravel()
        return flat[idx]
    return x.ravel()[idx]


def j_upper(m2: int, a, b, B):
    """J-bar_m(a, b) = int_sqrt(b)^inf (a+u^2)^(-m) du.

    y = a/(a+b) <= 1/2: positive hypergeometric series (no cancellation).
    y > 1/2: complement j_infinite - j_lower (couple of digits cancellation
    at worst, bounded by the mass split at the integration break).
    """
    a = B.asarray(a)
    b = B.asarray(b)
    ah = np.asarray(B.mask_of(a))
    bh = np.asarray(B.mask_of(b))
    ah, bh = np.broadcast_arrays(ah, bh)
    shape = ah.shape
    series = (bh > ah).ravel()
    a_full = _bcast(a, shape, B)
    b_full = _bcast(b, shape, B)
    out_flat = B.zeros((ah.size,))
    idx_c = np.where(~series)[0]
    if idx_c.size:
        ac = _gather(a_full, idx_c, B)
        bc = _gather(b_full, idx_c, B)
        comp = j_infinite(m2, ac, B) - j_lower(m2, ac, bc, B)
        out_flat[idx_c] = comp
    idx_s = np.where(series)[0]
    if idx_s.size:
        asv = _gather(a_full, idx_s, B)
        bsv = _gather(b_full, idx_s, B)
        apb = asv + bsv
        y = asv / apb
        f = _hyp2f1_m_series(m2, y, B)
        val = B.pow_half(apb, -(m2 - 1)) * B.sqrt(bsv / apb) * f / (m2 - 1.0)
        out_flat[idx_s] = val
    return out_flat.reshape(*shape) if hasattr(out_flat, "reshape") else out_flat


def _bcast(x, shape, B):
    if B.kind == "f128":
        return x.broadcast_to(shape)
    return np.broadcast_to(x, shape)


_SERIES_BANDS = ((2e-3, 14), (0.06, 36), (0.3, 74), (0.51, 140))


def _hyp2f1_m_series(m2: int, y, B):
    """2F1(m, 1; m+1/2; y) on a flat batch, y in (0, 1/2].

    Positive terms T_0 = 1, T_{k+1} = T_k * y * (m+k)/(m+1/2+k); the batch is
    partitioned by y so small arguments stop early.
    """
    yh = np.asarray(B.mask_of(y)).ravel()
    out = B.zeros((yh.size,))
    done = np.zeros(yh.size, dtype=bool)
    lo = 0.0
    for hi, nterms in _SERIES_BANDS:
        band = (~done) & (yh <= hi)
        done |= band
        idx = np.where(band)[0]
        if not idx.size:
            lo = hi
            continue
        yb = _gather(y, idx, B)
        ratios = _beta_ratios(m2, nterms, B)
        acc = B.full((idx.size,), 1.0)
        term = B.full((idx.size,), 1.0)
        for k in range(nterms):
            term = term * yb * ratios[k]
            acc = acc + term
        out[idx] = acc
        lo = hi
    if not np.all(done):
        raise ValueError("series argument above 1/2")
    return out


# erf- and erfc-weighted moments ------------------------------------------------

def erf_moment(n: int, s, t, B):
    """E(n, s, t) = int_0^inf r^n e^(-s r^2) erf(sqrt(t) r) dr."""
    return B.gamma_half(n + 2) / B.sqrt_pi * j_lower(n + 2, s, t, B)


def erfc_moment(n: int, t, s, B):
    """Ec(n, t, s) = int_0^inf x^n e^(-t x^2) erfc(sqrt(s) x) dx."""
    return B.gamma_half(n + 2) / B.sqrt_pi * j_upper(n + 2, t, s, B)


# ---------------------------------------------------------------------------
# the radial Coulomb kernel
# ---------------------------------------------------------------------------

def _g_chain(mmax: int, s, n2: int, t, B, st=None):
    """G(m) = int r^m e^(-s r^2) I1(r) dr with I1(r) = int_0^r x^n2 e^(-t x^2) dx."""
    if st is None:
        st = s + t
    G = [None] * (mmax + 1)
    G[0] = B.sqrt_pi / (B.sqrt(s) * 2.0) * erfc_moment(n2, t, s, B)
    if mmax >= 1:
        G[1] = moment(n2, st, B) / (s * 2.0)
    for m in range(2, mmax + 1):
        G[m] = (G[m - 2] * float(m - 1) + moment(m - 1 + n2, st, B)) / (s * 2.0)
    return G


def _k1(s, n2: int, t, B):
    """K(1, s; n2, t) closed form."""
    return moment_diff(n2 - 1, t, s, B) / (s * 2.0) \
        + B.sqrt_pi / (B.sqrt(s) * 2.0) * erfc_moment(n2, t, s, B)


def _k22(s, t, B):
    """K(2, s; 2, t) = sqrt(pi) / (8 s t sqrt(s+t))."""
    return B.sqrt_pi / (s * t * B.sqrt(s + t) * 8.0)


def kernel_column(n1_values, s, n2: int, t, B):
    """K(n1, s; n2, t) for every n1 in ``n1_values`` on broadcast grids.

    Recursion K(n1) = ((n1-1) K(n1-2) - G(n1-3)) / (2s); bases n1 = 1, 2.
    """
    n1max = max(n1_values)
    vals = {}
    if n1max >= 1:
        vals[1] = _k1(s, n2, t, B)
    if n1max >= 2:
        if n2 == 2:
            vals[2] = _k22(s, t, B)
        else:
            # swap: K(2, s; n2, t) = K(n2, t; 2, s)
            vals[2] = kernel_column([n2], t, 2, s, B)[n2]
    if n1max >= 3:
        G = _g_chain(n1max - 3, s, n2, t, B)
        for n1 in range(3, n1max + 1):
            vals[n1] = (vals[n1 - 2] * float(n1 - 1) - G[n1 - 3]) / (s * 2.0)
    return {n1: vals[n1] for n1 in n1_values}


def kernel_table(n1_values, s, n2_values, t, mode: PrecisionMode):
    """Dense kernel table over the outer grid of unique exponent sums.

    Returns {(n1, n2): matrix of shape (len(s), len(t))} in the mode backend.
    """
    B = get_backend(mode)
    sg = B.asarray(np.asarray(s, dtype=float))
    tg = B.asarray(np.asarray(t, dtype=float))
    scol = sg.reshape(-1, 1) if hasattr(sg, "reshape") else sg[:, None]
    trow = tg.reshape(1, -1) if hasattr(tg, "reshape") else tg[None, :]
    out = {}
    for n2 in n2_values:
        cols = kernel_column(sorted(set(n1_values)), scol, n2, trow, B)
        for n1 in n1_values:
            out[(n1, n2)] = cols[n1]
    return out


# ---------------------------------------------------------------------------
# nuclear attraction moments
# ---------------------------------------------------------------------------

def potential_moment(n: int, zeta, model: NuclearModel, B):
    """W(n) = int_0^inf r^n e^(-zeta r^2) V(r) dr for the nuclear model.

    V carries the electron-nucleus sign: V(r) -> -Z/r at large r.
    """
    z = model.z
    if model.family == "point":
        return moment(n - 1, zeta, B) * (-z)
    if model.family == "gaussian":
        xi = 3.0 / (2.0 * model.rn_a0 ** 2)
        xiv = B.full(np.shape(B.mask_of(zeta)), xi)
        return erf_moment(n - 1, zeta, xiv, B) * (-z)
    if model.family == "shell":
        R = model.rn_a0
    else:  # ball
        R = model.rn_a0 * np.sqrt(5.0 / 3.0)
    x = zeta * (R * R)

    def glow(m):
        return B.gamma_lower_half(m + 1, x) / (B.pow_half(zeta, m + 1) * 2.0)

    tail = moment(n - 1, zeta, B) - glow(n - 1)
    if model.family == "shell":
        return (glow(n) * (1.0 / R) + tail) * (-z)
    inner = (glow(n) * (3.0 * R * R) - glow(n + 2)) / (2.0 * R ** 3)
    return (inner + tail) * (-z)


# ---------------------------------------------------------------------------
# spec-level scalar operations on primitives
# ---------------------------------------------------------------------------

def overlap(a: Primitive, b: Primitive) -> float:
    """Overlap of two normalized primitives of equal power."""
    if a.p != b.p:
        raise ValueError("overlap requires equal radial powers")
    r = 2.0 * np.sqrt(a.zeta * b.zeta) / (a.zeta + b.zeta)
    return float(r ** (a.p + 0.5))


def kb_coupling(a: Primitive, b: Primitive, kappa: int) -> float:
    """(a | d/dr + kappa/r | b) for normalized primitives."""
    B = get_backend(F64)
    z = a.zeta + b.zeta
    na, nb = a.norm, b.norm
    # (d/dr + k/r) b = (p+k) r^(p-1) - 2 zeta_b r^(p+1), times e^(-zeta_b r^2)
    val = (b.p + kappa) * moment(a.p + b.p - 1, z, B) \
        - 2.0 * b.zeta * moment(a.p + b.p + 1, z, B)
    return float(na * nb * val)


def nuclear_attraction(a: Primitive, b: Primitive, model: NuclearModel) -> float:
    """(a | V | b) for normalized primitives of equal power (Hartree)."""
    if a.p != b.p:
        raise ValueError("nuclear_attraction requires equal radial powers")
    B = get_backend(F64)
    z = np.asarray(a.zeta + b.zeta)
    return float(a.norm * b.norm * B.mask_of(potential_moment(a.p + b.p, z, model, B)))
