"""Wichmann-Kroll energy shifts: kernel contractions and partial-wave series.

The shift of a reference orbital against a vacuum channel is

    dE_k = sum D_ref_(mu nu) Xi_(nu mu sigma rho) D_wk_(rho sigma),
    Xi   = 4 pi  int int Omega_ref(r1) (1/r_>) Omega_vac(r2) dr1 dr2.

Two equivalent evaluation routes are provided.  ``xi_tensor`` materializes the
packed two-electron tensor (with an on-disk cache keyed by basis content); it
is what ``shift_kappa`` contracts with high-precision GEMMs.  The production
sweep path factors the same contraction through the unique exponent-sum grid:
densities are collapsed to per-power weight vectors on the triangle of
exponent pairs and contracted against a kernel table, which costs orders of
magnitude less and is algebraically identical (verified in the test suite).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import dd as ddm
from .basis import AssembledBasis, BasisSpec, ReferenceBasis, assemble
from .constants import EH_EV, MC2
from .density import (DensityMatrix, linear_vp_dmat, reference_dmat, vp_dmat,
                      vp_dmat_sea, wk_dmat)
from .dirac import SpectrumSolution, assemble_matrices, solve_channel
from .precision import (F64, F128, PrecisionMode, convert_matrix, gemm_hp,
                        split, to_mp_matrix)
from .radial import NuclearModel, kernel_table

FOUR_PI = 4.0 * np.pi


# ---------------------------------------------------------------------------
# collapse to the unique exponent-sum grid
# ---------------------------------------------------------------------------

@dataclass
class CollapsedDensity:
    """Per-power weight vectors over the triangle of exponent pairs."""

    powers: list
    weights: dict                  # power -> native vector (len = n_tri)
    sums: np.ndarray               # zeta_i + zeta_j on the triangle (f64)
    mode: PrecisionMode


def _family_slices(basis: AssembledBasis):
    n_exp = basis.spec.n_exponents
    nfam = basis.dimension // n_exp
    return [(f * n_exp, (f + 1) * n_exp) for f in range(nfam)], n_exp


def _component_terms(basis: AssembledBasis, select: int):
    """[(power, coef-vector over function index)] for component 0=f, 1=g."""
    from .backends import get_backend

    B = get_backend(basis.mode)
    n = basis.dimension
    powers = sorted({p for pair in basis.functions for p in pair[select].powers})
    out = []
    for p in powers:
        vec = B.zeros((n,))
        for i, pair in enumerate(basis.functions):
            comp = pair[select]
            for c, pw in zip(comp.coefs, comp.powers):
                if pw == p:
                    vec[i] = c
        out.append((p, vec))
    return out


def collapse_density(D: DensityMatrix, basis: AssembledBasis) -> CollapsedDensity:
    """Tr(D Omega(r)) = sum_p sum_tri w_p[tri] r^p e^(-sums[tri] r^2)."""
    mode = D.mode
    if basis.mode.label != mode.label:
        basis = assemble(basis.spec, mode)
    slices, n_exp = _family_slices(basis)
    zet = np.asarray(basis.spec.exponents)
    iu = np.triu_indices(n_exp)
    sums = zet[iu[0]] + zet[iu[1]]
    Dm = D.matrix

    weights: dict = {}
    for select in (0, 1):
        terms = _component_terms(basis, select)
        for pa, ca in terms:
            for pb, cb in terms:
                p = pa + pb
                acc = weights.get(p)
                # exponent-pair weight matrix over (mu, nu)
                for (a0, a1) in slices:
                    for (b0, b1) in slices:
                        blk = _slice_matrix(Dm, a0, a1, b0, b1, mode)
                        w = _outer_weighted(ca, cb, a0, a1, b0, b1, blk, mode)
                        acc = w if acc is None else _madd(acc, w, mode)
                weights[p] = acc
    out = {}
    for p, W in weights.items():
        out[p] = _triangle_reduce(W, iu, mode)
    return CollapsedDensity(sorted(out), out, sums, mode)


def _slice_matrix(M, a0, a1, b0, b1, mode):
    if mode.kind == "mp":
        import mpmath

        out = mpmath.matrix(a1 - a0, b1 - b0)
        for i in range(a0, a1):
            for j in range(b0, b1):
                out[i - a0, j - b0] = M[i, j]
        return out
    return M[a0:a1, b0:b1]


def _outer_weighted(ca, cb, a0, a1, b0, b1, blk, mode):
    if mode.kind == "f64":
        return np.asarray(ca)[a0:a1, None] * np.asarray(cb)[None, b0:b1] * blk
    if mode.kind == "f128":
        cav = ca[a0:a1]
        cbv = cb[b0:b1]
        o = ddm.mul(ddm.DD(cav.hi[:, None], cav.lo[:, None]),
                    ddm.DD(cbv.hi[None, :], cbv.lo[None, :]))
        return ddm.mul(o, blk)
    import mpmath

    rows, cols = blk.rows, blk.cols
    out = mpmath.matrix(rows, cols)
    for i in range(rows):
        for j in range(cols):
            out[i, j] = ca[a0 + i] * cb[b0 + j] * blk[i, j]
    return out


def _madd(a, b, mode):
    if mode.kind == "f128":
        return ddm.add(a, b)
    return a + b


def _triangle_reduce(W, iu, mode):
    """w[tri(i<=j)] = W[i,j] + W[j,i] (diagonal once)."""
    if mode.kind == "f64":
        M2 = W + W.T
        vec = M2[iu]
        diag = iu[0] == iu[1]
        vec[diag] *= 0.5
        return vec
    if mode.kind == "f128":
        M2 = ddm.add(W, ddm.DD(W.hi.T.copy(), W.lo.T.copy()))
        vec = ddm.DD(M2.hi[iu], M2.lo[iu])
        diag = iu[0] == iu[1]
        vec = ddm.where(diag, ddm.mul_pow2(vec, 0.5), vec)
        return vec
    import mpmath

    n = len(iu[0])
    out = np.empty(n, dtype=object)
    for t in range(n):
        i, j = int(iu[0][t]), int(iu[1][t])
        out[t] = W[i, j] if i == j else W[i, j] + W[j, i]
    return out


def contract_collapsed(ref: CollapsedDensity, vac: CollapsedDensity,
                       mode: PrecisionMode, chunk: int = 6000):
    """4 pi * sum_pq w_ref[p]^T K(p, q) w_vac[q]; returns a float (Eh)."""
    total = None
    nvac = len(vac.sums)
    for lo in range(0, nvac, chunk):
        hi = min(lo + chunk, nvac)
        tab = kernel_table(ref.powers, ref.sums, vac.powers, vac.sums[lo:hi], mode)
        for p in ref.powers:
            wp = ref.weights[p]
            for q in vac.powers:
                wq = _vec_slice(vac.weights[q], lo, hi, mode)
                term = _bilinear(wp, tab[(p, q)], wq, mode)
                total = term if total is None else _madd(total, term, mode)
    return _to_float(total, mode) * FOUR_PI


def _vec_slice(v, lo, hi, mode):
    if mode.kind == "f128":
        return v[lo:hi]
    return v[lo:hi]


def _bilinear(wp, K, wq, mode):
    if mode.kind == "f64":
        return float(wp @ np.asarray(K) @ wq)
    if mode.kind == "f128":
        row = ddm.DD(wp.hi[None, :], wp.lo[None, :])
        col = ddm.DD(wq.hi[:, None], wq.lo[:, None])
        t = gemm_hp(split(gemm_hp(split(row, F128), split(K, F128, axis=0), F128), F128),
                    split(col, F128, axis=0), F128)
        return ddm.DD(t.hi[0, 0], t.lo[0, 0])
    import mpmath

    acc = mpmath.mpf(0)
    for i in range(len(wp)):
        row_acc = mpmath.mpf(0)
        for j in range(len(wq)):
            row_acc += K[i, j] * wq[j]
        acc += wp[i] * row_acc
    return acc


def _to_float(x, mode):
    if x is None:
        return 0.0
    if mode.kind == "f64":
        return float(x)
    if mode.kind == "f128":
        return float(x.hi + x.lo)
    return float(x)


# ---------------------------------------------------------------------------
# explicit two-electron tensor (packed pairs), with on-disk cache
# ---------------------------------------------------------------------------

@dataclass
class XiTensor:
    """Packed Xi matrix over (bra function pairs) x (ket function pairs).

    Pairs are the upper triangle (i <= j); contraction weights for symmetric
    density matrices double the off-diagonal entries.
    """

    matrix: object                # native (n_bra_pairs x n_ket_pairs)
    mode: PrecisionMode
    bra_dim: int
    ket_dim: int

    def pair_index(self, n, i, j):
        i, j = min(i, j), max(i, j)
        return i * n - i * (i - 1) // 2 + (j - i)

    def value(self, i, j, k, l):
        pi = self.pair_index(self.bra_dim, i, j)
        pk = self.pair_index(self.ket_dim, k, l)
        M = self.matrix
        if self.mode.kind == "f128":
            return float(M.hi[pi, pk] + M.lo[pi, pk])
        return float(M[pi, pk])


def xi_tensor(bra: AssembledBasis, ket: AssembledBasis, mode: PrecisionMode = F64,
              cache_dir: str | None = None) -> XiTensor:
    """Assemble the packed Xi tensor 4pi <Omega_bra | 1/r_> | Omega_ket>."""
    key = None
    if cache_dir:
        key = os.path.join(cache_dir, f"xi_{bra.spec.content_key()}_{ket.spec.content_key()}_{mode.label}.npz")
        if os.path.exists(key):
            return _xi_load(key, mode, bra.dimension, ket.dimension)
    Xi = _xi_build(bra, ket, mode)
    if key:
        os.makedirs(cache_dir, exist_ok=True)
        _xi_save(key, Xi)
    return Xi


def _xi_build(bra: AssembledBasis, ket: AssembledBasis, mode: PrecisionMode) -> XiTensor:
    iub = np.triu_indices(bra.spec.n_exponents)
    iuk = np.triu_indices(ket.spec.n_exponents)
    zb = np.asarray(bra.spec.exponents)
    zk = np.asarray(ket.spec.exponents)
    sums_b = zb[iub[0]] + zb[iub[1]]
    sums_k = zk[iuk[0]] + zk[iuk[1]]

    terms_b = _xi_pair_map(bra, iub, mode)     # {power: (n_pairs x n_tri) map}
    terms_k = _xi_pair_map(ket, iuk, mode)
    powers_b = sorted(terms_b)
    powers_k = sorted(terms_k)
    tab = kernel_table(powers_b, sums_b, powers_k, sums_k, mode)

    npb = _npairs(bra.dimension)
    npk = _npairs(ket.dimension)
    total = None
    for p in powers_b:
        for q in powers_k:
            K = tab[(p, q)]
            if mode.kind == "f64":
                part = terms_b[p] @ np.asarray(K) @ np.asarray(terms_k[q]).T
            elif mode.kind == "f128":
                part = gemm_hp(split(gemm_hp(split(terms_b[p], F128),
                                             split(K, F128, axis=0), F128), F128),
                               split(ddm.DD(terms_k[q].hi.T.copy(), terms_k[q].lo.T.copy()),
                                     F128, axis=0), F128)
            else:
                part = terms_b[p] * K * terms_k[q].T
            total = part if total is None else _madd(total, part, mode)
    if mode.kind == "f64":
        total = np.asarray(total) * FOUR_PI
    elif mode.kind == "f128":
        total = ddm.scale(total, FOUR_PI)
    else:
        total = total * FOUR_PI
    return XiTensor(total, mode, bra.dimension, ket.dimension)


def _npairs(n):
    return n * (n + 1) // 2


def _xi_pair_map(basis: AssembledBasis, iu_exp, mode: PrecisionMode):
    """Maps M_p[(function pair), (exponent-sum triangle)] = sum of coef products."""
    from .backends import get_backend

    B = get_backend(mode)
    n = basis.dimension
    n_exp = basis.spec.n_exponents
    pair_i, pair_j = np.triu_indices(n)
    npairs = len(pair_i)
    ntri = len(iu_exp[0])
    tri_lookup = np.full((n_exp, n_exp), -1, dtype=int)
    for t, (a, b) in enumerate(zip(iu_exp[0], iu_exp[1])):
        tri_lookup[a, b] = tri_lookup[b, a] = t
    mu = pair_i % n_exp
    nu = pair_j % n_exp
    tri_of_pair = tri_lookup[mu, nu]

    maps: dict = {}
    for select in (0, 1):
        terms = _component_terms(basis, select)
        for pa, ca in terms:
            for pb, cb in terms:
                p = pa + pb
                if p not in maps:
                    maps[p] = B.zeros((npairs, ntri))
                M = maps[p]
                # Omega_(ij) = sum_ab c_a[i] c_b[j] r^(pa+pb) e^(-(zi+zj) r^2);
                # the (a, b) double loop covers both orderings.
                wi = _vec_take(ca, pair_i, mode)
                wj = _vec_take(cb, pair_j, mode)
                w = wi * wj if mode.kind != "f128" else ddm.mul(wi, wj)
                _scatter_add(M, np.arange(npairs), tri_of_pair, w, mode)
    return maps


def _vec_take(v, idx, mode):
    if mode.kind == "f128":
        return v[idx]
    return v[idx]


def _scatter_add(M, rows, cols, w, mode):
    if mode.kind == "f64":
        M[rows, cols] += w
    elif mode.kind == "f128":
        cur = M[rows, cols]
        M[rows, cols] = ddm.add(cur, w)
    else:
        for r, c, v in zip(rows, cols, w):
            M[int(r), int(c)] = M[int(r), int(c)] + v


def _xi_save(path, Xi: XiTensor):
    if Xi.mode.kind == "f64":
        np.savez_compressed(path, kind="f64", m=np.asarray(Xi.matrix),
                            bra=Xi.bra_dim, ket=Xi.ket_dim)
    elif Xi.mode.kind == "f128":
        np.savez_compressed(path, kind="f128", hi=Xi.matrix.hi, lo=Xi.matrix.lo,
                            bra=Xi.bra_dim, ket=Xi.ket_dim)
    else:
        raise ValueError("xi cache supports f64/f128 only")


def _xi_load(path, mode, bra_dim, ket_dim) -> XiTensor:
    z = np.load(path)
    if z["kind"] == "f64":
        return XiTensor(z["m"], mode, int(z["bra"]), int(z["ket"]))
    return XiTensor(ddm.DD(z["hi"], z["lo"]), mode, int(z["bra"]), int(z["ket"]))


def pack_pairs(D: DensityMatrix) -> object:
    """Symmetric matrix -> pair vector with doubled off-diagonals."""
    M = D.matrix
    mode = D.mode
    n = M.hi.shape[0] if mode.kind == "f128" else (M.rows if mode.kind == "mp" else M.shape[0])
    iu = np.triu_indices(n)
    offd = (iu[0] != iu[1]).astype(float) + 1.0
    if mode.kind == "f64":
        return np.asarray(M)[iu] * offd
    if mode.kind == "f128":
        return ddm.scale(ddm.DD(M.hi[iu], M.lo[iu]), offd)
    out = np.empty(len(iu[0]), dtype=object)
    for t, (i, j) in enumerate(zip(iu[0], iu[1])):
        out[t] = M[int(i), int(j)] * (2 if i != j else 1)
    return out


def shift_kappa(ref: DensityMatrix, wk: DensityMatrix, xi: XiTensor) -> float:
    """dE (Eh) = packed(D_ref)^T Xi packed(D_wk), contracted at the run precision."""
    if ref.mode.label != wk.mode.label or xi.mode.label != wk.mode.label:
        raise ValueError("precision modes of densities and tensor must match")
    a = pack_pairs(ref)
    b = pack_pairs(wk)
    mode = xi.mode
    if mode.kind == "f64":
        return float(a @ np.asarray(xi.matrix) @ b)
    if mode.kind == "f128":
        row = ddm.DD(a.hi[None, :], a.lo[None, :])
        col = ddm.DD(b.hi[:, None], b.lo[:, None])
        t = gemm_hp(split(gemm_hp(split(row, F128), split(xi.matrix, F128, axis=0), F128),
                          F128), split(col, F128, axis=0), F128)
        return float(t.hi[0, 0] + t.lo[0, 0])
    acc = 0
    M = xi.matrix
    for i in range(len(a)):
        row = 0
        for j in range(len(b)):
            row += M[i, j] * b[j]
        acc += a[i] * row
    return float(acc)


# ---------------------------------------------------------------------------
# pipeline: per-|kappa| shifts and series
# ---------------------------------------------------------------------------

@dataclass
class ShiftRecord:
    z: float
    model_family: str
    rn_fm: float
    abs_kappa: int
    n: int
    beta: float
    precision: str
    delta_e_h: float
    warnings: list = field(default_factory=list)

    @property
    def delta_e_ev(self) -> float:
        return self.delta_e_h * EH_EV


_FREE_SOLVE_CACHE: dict = {}
_FREE_SOLVE_CAP = 24


def _free_solution(spec: BasisSpec, mode: PrecisionMode, solver_mode):
    key = (spec.content_key(), mode.label, getattr(solver_mode, "label", None))
    if key not in _FREE_SOLVE_CACHE:
        if len(_FREE_SOLVE_CACHE) >= _FREE_SOLVE_CAP:
            _FREE_SOLVE_CACHE.pop(next(iter(_FREE_SOLVE_CACHE)))
        _FREE_SOLVE_CACHE[key] = solve_channel(spec, None, mode, solver_mode=solver_mode)
    return _FREE_SOLVE_CACHE[key]


def clear_caches():
    _FREE_SOLVE_CACHE.clear()


@dataclass
class ReferenceOrbital:
    """Solved reference orbital plus its collapsed density."""

    basis: ReferenceBasis
    model: NuclearModel
    mode: PrecisionMode
    solution: SpectrumSolution
    dmat: DensityMatrix
    collapsed: CollapsedDensity
    assembled: AssembledBasis


def prepare_reference(refbasis: ReferenceBasis, model: NuclearModel,
                      mode: PrecisionMode, solver_mode=None) -> ReferenceOrbital:
    spec = refbasis.spec("rkb")
    sol = solve_channel(spec, model, mode, solver_mode=solver_mode)
    dmat = reference_dmat(sol, mode)
    ab = assemble(spec, mode)
    col = collapse_density(dmat, ab)
    return ReferenceOrbital(refbasis, model, mode, sol, dmat, col, ab)


def wk_channel_dmat(spec: BasisSpec, model: NuclearModel, mode: PrecisionMode,
                    solver_mode=None) -> DensityMatrix:
    """Sea-referenced WK density matrix for one kappa channel."""
    sol = solve_channel(spec, model, mode, solver_mode=solver_mode)
    sol0 = _free_solution(spec, mode, solver_mode)
    eff_solver = sol0.mode
    vac_solver_basis = assemble(spec, eff_solver)
    _, _, Vmat = assemble_matrices(vac_solver_basis, model)
    dsea = vp_dmat_sea(sol, sol0, mode)
    dlin = linear_vp_dmat(sol0, Vmat, mode)
    return wk_dmat(dsea, dlin)


def shift_abs_kappa(ref: ReferenceOrbital, abs_kappa: int, vac_exponents,
                    mode: PrecisionMode, scheme: str = "dkb",
                    solver_mode=None) -> ShiftRecord:
    """Per-|kappa| WK shift: both kappa signs solved and summed."""
    total = 0.0
    warns = []
    for kappa in (abs_kappa, -abs_kappa):
        spec = BasisSpec.make(kappa, scheme, vac_exponents)
        dwk = wk_channel_dmat(spec, ref.model, mode, solver_mode=solver_mode)
        ab = assemble(spec, mode)
        col = collapse_density(dwk, ab)
        total += contract_collapsed(ref.collapsed, col, mode)
    z = np.asarray(vac_exponents)
    from .basis import beta_of

    return ShiftRecord(
        z=ref.model.z, model_family=ref.model.family, rn_fm=ref.model.rn_fm,
        abs_kappa=abs_kappa, n=len(z), beta=beta_of(z), precision=mode.label,
        delta_e_h=total, warnings=warns)


def shift_series(ref: ReferenceOrbital, abs_kappa: int, n_values,
                 mode: PrecisionMode, scheme: str = "dkb") -> list:
    """ShiftRecord per wkopt-N basis size (duplicates permitted)."""
    from .basis import wkopt

    records = []
    for n in n_values:
        records.append(shift_abs_kappa(ref, abs_kappa, wkopt(int(n)), mode, scheme))
    return records


def partial_wave_total(per_kappa_ev: dict, fit: str = "two_point"):
    """Sum over computed |kappa| plus a fitted C/k^4 tail.

    per_kappa_ev: {abs_kappa: dE_eV}.  Returns (sum_K, total, tail_info).
    ``fit`` = "two_point" (least squares on the last two points) or
    "least_squares" (|kappa| in {3,4,5}).
    """
    from scipy.special import zeta

    ks = np.array(sorted(per_kappa_ev))
    if len(ks) < 3:
        raise ValueError("need at least three partial waves")
    vals = np.array([per_kappa_ev[k] for k in ks])
    kmax = int(ks[-1])
    sum_k = float(vals.sum())
    tail_pts = ks[-2:] if fit == "two_point" else ks[-3:]
    y = np.array([per_kappa_ev[int(k)] for k in tail_pts], dtype=float)
    x = tail_pts.astype(float) ** -4.0
    flags = []
    if np.any(np.diff(vals) > 0) or np.any(y <= 0):
        flags.append("non-monotone partial waves: tail extrapolation unreliable")
        return sum_k, None, {"flags": flags}
    c = float(x @ y / (x @ x))
    tail = c * float(zeta(4.0, kmax + 1))
    return sum_k, sum_k + tail, {"C": c, "kmax": kmax, "flags": flags,
                                 "fit": fit, "tail": tail}
