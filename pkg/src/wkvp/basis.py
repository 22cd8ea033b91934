"""Basis construction: even-tempered exponents, kinetic-balance schemes,
and energy-optimized reference-orbital exponent lists.

Exponent lists are canonically float64 (so runs at different scalar precisions
share the exact same basis); assembled basis functions carry coefficients at
the precision of the run.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .backends import get_backend
from .precision import F64, PrecisionMode
from .radial import NuclearModel, moment

WKOPT_ZETA_MIN = 201.0
WKOPT_ZETA_MAX = 195883180777.0


def ell_kappa(kappa: int) -> int:
    """Orbital angular momentum of the large component: l = |k| + (sgn k - 1)/2."""
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    return abs(kappa) + (np.sign(kappa) - 1) // 2


def even_tempered(zeta_min: float, zeta_max: float, n: int) -> np.ndarray:
    """Geometric exponent ladder from zeta_min to zeta_max inclusive."""
    if not (0 < zeta_min < zeta_max):
        raise ValueError("need 0 < zeta_min < zeta_max")
    if n < 2:
        raise ValueError("need at least two exponents")
    return zeta_min * (zeta_max / zeta_min) ** (np.arange(n) / (n - 1.0))


def wkopt(n: int) -> np.ndarray:
    """The universal vacuum exponent family on [201, 195883180777] a0^-2."""
    return even_tempered(WKOPT_ZETA_MIN, WKOPT_ZETA_MAX, n)


def beta_of(exponents: np.ndarray) -> float:
    """Geometric ratio of an even-tempered list (validated to 1e-12)."""
    z = np.asarray(exponents, dtype=float)
    ratios = z[1:] / z[:-1]
    beta = (z[-1] / z[0]) ** (1.0 / (len(z) - 1))
    if np.max(np.abs(ratios - beta)) / beta > 1e-12:
        raise ValueError("exponent list is not even-tempered")
    return float(beta)


@dataclass(frozen=True)
class BasisSpec:
    """A one-channel basis: kappa, balance scheme, and exponent list."""

    kappa: int
    scheme: str                      # "rkb" | "dkb"
    exponents: tuple

    def __post_init__(self):
        if self.kappa == 0:
            raise ValueError("kappa must be nonzero")
        if self.scheme not in ("rkb", "dkb"):
            raise ValueError(f"unknown balance scheme {self.scheme!r}")
        z = np.asarray(self.exponents, dtype=float)
        if len(z) == 0 or np.any(z <= 0) or np.any(np.diff(z) <= 0):
            raise ValueError("exponents must be positive and strictly increasing")

    @staticmethod
    def make(kappa, scheme, exponents) -> "BasisSpec":
        return BasisSpec(kappa, scheme, tuple(float(z) for z in exponents))

    @property
    def n_exponents(self) -> int:
        return len(self.exponents)

    @property
    def dimension(self) -> int:
        return 2 * len(self.exponents)

    @property
    def ell_large(self) -> int:
        return ell_kappa(self.kappa)

    @property
    def ell_small(self) -> int:
        return ell_kappa(-self.kappa)

    @property
    def beta(self) -> float:
        return beta_of(np.asarray(self.exponents))

    def content_key(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.kappa}|{self.scheme}|".encode())
        h.update(np.asarray(self.exponents, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


class RFunc:
    """Scalar radial function sum_i c_i r^(p_i) e^(-zeta r^2), one exponent.

    Coefficients are backend scalars of the owning run's precision.
    """

    __slots__ = ("zeta", "coefs", "powers")

    def __init__(self, zeta: float, coefs, powers):
        self.zeta = float(zeta)
        self.coefs = list(coefs)
        self.powers = [int(p) for p in powers]

    def d_plus(self, kappa: int, B) -> "RFunc":
        """(d/dr + kappa/r) applied symbolically."""
        coefs, powers = [], []
        z = B.asarray(np.array(self.zeta))
        for c, p in zip(self.coefs, self.powers):
            if p + kappa != 0:
                coefs.append(c * float(p + kappa))
                powers.append(p - 1)
            coefs.append(c * z * (-2.0))
            powers.append(p + 1)
        return RFunc(self.zeta, coefs, powers)

    def norm2(self, B):
        z2 = B.asarray(np.array(2.0 * self.zeta))
        total = None
        for ci, pi in zip(self.coefs, self.powers):
            for cj, pj in zip(self.coefs, self.powers):
                v = ci * cj * moment(pi + pj, z2, B)
                total = v if total is None else total + v
        return total

    def normalized(self, B) -> "RFunc":
        inv = 1.0 / B.sqrt(self.norm2(B))
        return RFunc(self.zeta, [c * inv for c in self.coefs], self.powers)

    def scaled(self, f) -> "RFunc":
        return RFunc(self.zeta, [c * f for c in self.coefs], self.powers)

    def eval(self, r, B):
        """Pointwise values on a radial grid (backend container)."""
        r = B.asarray(r)
        e = B.exp(-(B.asarray(np.array(self.zeta)) * r * r))
        total = None
        for c, p in zip(self.coefs, self.powers):
            v = c * B.pow_int(r, p) * e
            total = v if total is None else total + v
        return total


ZERO_FUNC = RFunc(1.0, [], [])


@dataclass
class AssembledBasis:
    """Two-component basis vectors (f, g) for one kappa channel."""

    spec: BasisSpec
    mode: PrecisionMode
    functions: list = field(default_factory=list)   # [(RFunc f, RFunc g)]

    @property
    def dimension(self) -> int:
        return len(self.functions)

    @property
    def kappa(self) -> int:
        return self.spec.kappa


def assemble(spec: BasisSpec, mode: PrecisionMode = F64) -> AssembledBasis:
    """Build normalized two-component basis vectors for the channel.

    RKB: N pure-large vectors plus N小 pure-small vectors whose small parts are
    the normalized (d/dr + k/r) images of the large functions.
    DKB: 2N coupled vectors pairing each component with its balance partner;
    components are individually normalized, the vector carries 1/sqrt(2).
    """
    B = get_backend(mode)
    kappa = spec.kappa
    p_large = ell_kappa(kappa) + 1
    p_small = ell_kappa(-kappa) + 1
    one = B.asarray(np.array(1.0))
    funcs = []
    if spec.scheme == "rkb":
        for z in spec.exponents:
            fl = RFunc(z, [one], [p_large]).normalized(B)
            funcs.append((fl, ZERO_FUNC))
        for z in spec.exponents:
            fl = RFunc(z, [one], [p_large]).normalized(B)
            gs = fl.d_plus(kappa, B).normalized(B)
            funcs.append((ZERO_FUNC, gs))
    else:
        inv_sqrt2 = 1.0 / B.sqrt(B.asarray(np.array(2.0)))
        for z in spec.exponents:
            fl = RFunc(z, [one], [p_large]).normalized(B)
            gs = fl.d_plus(kappa, B).normalized(B)
            funcs.append((fl.scaled(inv_sqrt2), gs.scaled(inv_sqrt2)))
        for z in spec.exponents:
            gs = RFunc(z, [one], [p_small]).normalized(B)
            fl = gs.d_plus(-kappa, B).normalized(B)
            funcs.append((fl.scaled(inv_sqrt2), gs.scaled(inv_sqrt2)))
    return AssembledBasis(spec=spec, mode=mode, functions=funcs)


# ---------------------------------------------------------------------------
# reference (energy-optimized) bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceBasis:
    element: str
    kappa0: int
    exponents: tuple
    provenance: str = ""

    def __post_init__(self):
        z = np.asarray(self.exponents, dtype=float)
        if np.any(z <= 0):
            raise ValueError("reference exponents must be positive")
        if len(np.unique(z)) != len(z):
            raise ValueError("duplicate reference exponents rejected")

    def spec(self, scheme: str = "rkb") -> BasisSpec:
        return BasisSpec.make(self.kappa0, scheme, sorted(self.exponents))


def load_reference_basis(path_or_text) -> ReferenceBasis:
    """Parse the plain-text reference format (header lines + one exponent/line)."""
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        text = open(path_or_text).read()
        prov = str(path_or_text)
    else:
        text = str(path_or_text)
        prov = "<inline>"
    element, kappa0 = None, None
    exps = []
    for raw in io.StringIO(text):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0].lower() == "element":
            element = parts[1]
        elif parts[0].lower() == "kappa0":
            kappa0 = int(parts[1])
        else:
            exps.append(float(parts[0]))
    if element is None or kappa0 is None or not exps:
        raise ValueError("reference basis file needs element, kappa0, and exponents")
    return ReferenceBasis(element, kappa0, tuple(exps), prov)


def save_reference_basis(basis: ReferenceBasis, path):
    with open(path, "w") as fh:
        fh.write(f"element {basis.element}\n")
        fh.write(f"kappa0 {basis.kappa0}\n")
        for z in basis.exponents:
            fh.write(f"{z:.16e}\n")


def bundled_reference_basis(element: str) -> ReferenceBasis:
    """Load one of the shipped per-element reference exponent lists."""
    here = os.path.dirname(__file__)
    path = os.path.join(here, "data", "reference_bases", f"{element.lower()}.txt")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no bundled reference basis for {element!r}")
    return load_reference_basis(path)


def trim_reference(basis: ReferenceBasis, model: NuclearModel, threshold: float,
                   mode: PrecisionMode = F64) -> ReferenceBasis:
    """Drop small exponents whose removal moves the ground state < threshold (Eh).

    Exponents are removed greedily from the diffuse end; the first removal that
    breaks the threshold stops the scan (suffix-stable result).
    """
    from .dirac import ground_state_energy

    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    exps = sorted(basis.exponents)
    e_full = ground_state_energy(BasisSpec.make(basis.kappa0, "rkb", exps), model, mode)
    kept = list(exps)
    while len(kept) > 2:
        trial = kept[1:]
        e_trial = ground_state_energy(BasisSpec.make(basis.kappa0, "rkb", trial), model, mode)
        if abs(e_trial - e_full) < threshold:
            kept = trial
        else:
            break
    if not kept:
        raise ValueError("trim removed every exponent")
    return ReferenceBasis(basis.element, basis.kappa0, tuple(kept),
                          basis.provenance + "|trimmed")
