"""Shared test oracles: adaptive quadrature with scale-aware break points."""
import numpy as np
import pytest
from scipy import integrate


def quad_moment(f, scales, target=1e-13):
    """Adaptive quadrature of f on (0, inf) with break points at the given scales.

    Integrates in segments [0, s1], [s1, s2], ..., [sk, inf) so narrow
    structure at each Gaussian length scale is resolved.
    """
    pts = sorted(set(float(s) for s in scales if np.isfinite(s) and s > 0))
    edges = [0.0]
    for s in pts:
        for m in (0.3, 1.0, 4.0, 12.0):
            edges.append(s * m)
    edges = sorted(set(edges))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(f, a, b, epsabs=1e-300, epsrel=target, limit=200)
        total += v
    v, _ = integrate.quad(f, edges[-1], np.inf, epsabs=1e-300, epsrel=target, limit=200)
    return total + v


def _quad_segments(f, lo, hi, scales, target):
    """Integrate f over (lo, hi) (hi may be inf) with scale-aware edges."""
    edges = {lo}
    for sc in scales:
        for m in (0.3, 1.0, 4.0, 12.0):
            x = sc * m
            if lo < x and (hi == np.inf or x < hi):
                edges.add(x)
    finite_hi = hi != np.inf
    if finite_hi:
        edges.add(hi)
    edges = sorted(edges)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(f, a, b, epsabs=1e-300, epsrel=target, limit=200)
        total += v
    if not finite_hi:
        v, _ = integrate.quad(f, edges[-1], np.inf, epsabs=1e-300, epsrel=target, limit=200)
        total += v
    return total


def quad_coulomb_kernel(n1, s, n2, t, target=1e-11):
    """2-D quadrature oracle for K(n1, s; n2, t)."""
    scale2 = 1.0 / np.sqrt(t)

    def inner(r1):
        i1 = _quad_segments(lambda x: x ** n2 * np.exp(-t * x * x),
                            0.0, r1, [scale2], 1e-12)
        i2 = _quad_segments(lambda x: x ** (n2 - 1) * np.exp(-t * x * x),
                            r1, np.inf, [scale2], 1e-12)
        return r1 ** n1 * np.exp(-s * r1 * r1) * (i1 / r1 + i2)

    return _quad_segments(inner, 0.0, np.inf, [1.0 / np.sqrt(s), scale2], target)


@pytest.fixture(scope="session")
def kernel_oracle():
    return quad_coulomb_kernel


@pytest.fixture(scope="session")
def moment_oracle():
    return quad_moment
