"""Uniform elementwise-math API over float64, double-double, and mpmath.

The closed-form radial integrals are written once against this interface and
evaluated in whichever scalar precision a run requires.  Containers are numpy
float64 arrays, :class:`wkvp.dd.DD` arrays, or object ndarrays of mpf.
"""
from __future__ import annotations

import numpy as np
from scipy import special as sp

from . import dd
from .dd import DD
from .precision import PrecisionMode


class F64Backend:
    kind = "f64"

    def asarray(self, x):
        return np.asarray(x, dtype=np.float64)

    def from_f64(self, x):
        return np.asarray(x, dtype=np.float64)

    def to_f64(self, x):
        return np.asarray(x, dtype=np.float64)

    def zeros(self, shape):
        return np.zeros(shape)

    def full(self, shape, v):
        return np.full(shape, float(v))

    def where(self, mask, a, b):
        return np.where(mask, a, b)

    def mask_of(self, x):
        return np.asarray(x)

    def sqrt(self, x):
        return np.sqrt(x)

    def exp(self, x):
        return np.exp(x)

    def expm1(self, x):
        return np.expm1(x)

    def log1p(self, x):
        return np.log1p(x)

    def atan(self, x):
        return np.arctan(x)

    def erf(self, x):
        return sp.erf(x)

    def erfc(self, x):
        return sp.erfc(x)

    def pow_int(self, x, n):
        return x ** int(n)

    def pow_half(self, x, n2):
        return x ** (n2 / 2.0)

    def gamma_half(self, n2):
        return float(sp.gamma(n2 / 2.0))

    def gamma_lower_half(self, n2, x):
        a = n2 / 2.0
        return sp.gamma(a) * sp.gammainc(a, x)

    def gamma_upper_half(self, n2, x):
        a = n2 / 2.0
        return sp.gamma(a) * sp.gammaincc(a, x)

    @property
    def pi(self):
        return np.pi

    @property
    def sqrt_pi(self):
        return float(np.sqrt(np.pi))


class DDBackend:
    kind = "f128"

    def asarray(self, x):
        if isinstance(x, DD):
            return x
        return DD(np.asarray(x, dtype=np.float64))

    def from_f64(self, x):
        return DD(np.asarray(x, dtype=np.float64))

    def to_f64(self, x):
        return x.float() if isinstance(x, DD) else np.asarray(x, dtype=np.float64)

    def zeros(self, shape):
        return DD.zeros(shape)

    def full(self, shape, v):
        if isinstance(v, DD):
            return v.broadcast_to(shape).copy()
        return DD(np.full(shape, float(v)))

    def where(self, mask, a, b):
        return dd.where(mask, self.asarray(a), self.asarray(b))

    def mask_of(self, x):
        return x.hi if isinstance(x, DD) else np.asarray(x)

    def sqrt(self, x):
        return dd.sqrt(x)

    def exp(self, x):
        return dd.exp(x)

    def expm1(self, x):
        return dd.expm1(x)

    def log1p(self, x):
        return dd.log1p(x)

    def atan(self, x):
        return dd.atan(x)

    def erf(self, x):
        return dd.erf(x)

    def erfc(self, x):
        return dd.erfc(x)

    def pow_int(self, x, n):
        return dd.pow_int(x, int(n))

    def pow_half(self, x, n2):
        return dd._pow_half(x, int(n2))

    def gamma_half(self, n2):
        return dd.gamma_half(n2)

    def gamma_lower_half(self, n2, x):
        return dd.gamma_lower_half(n2, x)

    def gamma_upper_half(self, n2, x):
        return dd.gamma_upper_half(n2, x)

    @property
    def pi(self):
        return dd.const_pi()

    @property
    def sqrt_pi(self):
        return dd.const_sqrt_pi()


class MPBackend:
    kind = "mp"

    def __init__(self, dps: int):
        import mpmath

        self.mp = mpmath
        self.dps = dps
        # Object-array arithmetic (+,*,/ on mpf) runs at the *global* working
        # precision, so raise the floor once; extra digits are harmless.
        if mpmath.mp.dps < dps:
            mpmath.mp.dps = dps
        self._vec = {}

    def _v(self, name, fn, nargs=1):
        if name not in self._vec:
            self._vec[name] = np.frompyfunc(fn, nargs, 1)
        return self._vec[name]

    def asarray(self, x):
        if isinstance(x, np.ndarray) and x.dtype == object:
            return x
        arr = np.asarray(x)
        out = np.empty(arr.shape, dtype=object)
        flat_in = arr.ravel()
        flat = out.ravel()
        for i in range(flat_in.size):
            flat[i] = self.mp.mpf(float(flat_in[i]))
        return out

    from_f64 = asarray

    def to_f64(self, x):
        return np.asarray(x, dtype=np.float64) if x.dtype == object else x

    def zeros(self, shape):
        out = np.empty(shape, dtype=object)
        out[...] = self.mp.mpf(0)
        return out

    def full(self, shape, v):
        out = np.empty(shape, dtype=object)
        out[...] = v if isinstance(v, self.mp.mpf) else self.mp.mpf(float(v))
        return out

    def where(self, mask, a, b):
        a = a if isinstance(a, np.ndarray) else self.full(np.shape(mask), a)
        b = b if isinstance(b, np.ndarray) else self.full(np.shape(mask), b)
        return np.where(mask, a, b)

    def mask_of(self, x):
        return np.asarray(x, dtype=np.float64)

    def sqrt(self, x):
        with self.mp.workdps(self.dps):
            return self._v("sqrt", self.mp.sqrt)(x)

    def exp(self, x):
        with self.mp.workdps(self.dps):
            return self._v("exp", self.mp.exp)(x)

    def expm1(self, x):
        with self.mp.workdps(self.dps):
            return self._v("expm1", self.mp.expm1)(x)

    def log1p(self, x):
        with self.mp.workdps(self.dps):
            return self._v("log1p", lambda v: self.mp.log1p(v))(x)

    def atan(self, x):
        with self.mp.workdps(self.dps):
            return self._v("atan", self.mp.atan)(x)

    def erf(self, x):
        with self.mp.workdps(self.dps):
            return self._v("erf", self.mp.erf)(x)

    def erfc(self, x):
        with self.mp.workdps(self.dps):
            return self._v("erfc", self.mp.erfc)(x)

    def pow_int(self, x, n):
        with self.mp.workdps(self.dps):
            return self._v("powi", lambda v, k: v ** int(k), 2)(x, int(n))

    def pow_half(self, x, n2):
        with self.mp.workdps(self.dps):
            return self._v("powh", lambda v, k: v ** (self.mp.mpf(int(k)) / 2), 2)(x, int(n2))

    def gamma_half(self, n2):
        with self.mp.workdps(self.dps):
            return self.mp.gamma(self.mp.mpf(n2) / 2)

    def gamma_lower_half(self, n2, x):
        with self.mp.workdps(self.dps):
            a = self.mp.mpf(n2) / 2
            return self._v(f"glow{n2}", lambda v: self.mp.gammainc(a, 0, v))(x)

    def gamma_upper_half(self, n2, x):
        with self.mp.workdps(self.dps):
            a = self.mp.mpf(n2) / 2
            return self._v(f"gupp{n2}", lambda v: self.mp.gammainc(a, v, self.mp.inf))(x)

    @property
    def pi(self):
        with self.mp.workdps(self.dps):
            return +self.mp.pi

    @property
    def sqrt_pi(self):
        with self.mp.workdps(self.dps):
            return self.mp.sqrt(self.mp.pi)


_F64 = F64Backend()
_DD = DDBackend()


def get_backend(mode: PrecisionMode):
    if mode.kind == "f64":
        return _F64
    if mode.kind == "f128":
        return _DD
    return MPBackend(mode.digits)
