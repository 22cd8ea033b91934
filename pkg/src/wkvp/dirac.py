"""Radial Dirac generalized eigenproblem in a finite two-component basis.

Assembles the overlap, Hamiltonian, and potential matrices from closed-form
moment integrals (vectorized over exponent-sum grids), orthonormalizes the
basis (symmetric / canonical / Cholesky), solves the symmetric eigenproblem at
the requested scalar precision, and classifies the spectrum.

Sea classification is balanced: the lowest half of the spectrum is labeled
negative-continuum-like.  This coincides with the epsilon <= -mc^2 rule for
every normal state but keeps the kinetic-balance gap states (whose charge-
conjugation partners sit mirrored across +-kappa channels) consistently
assigned, which the vacuum-polarization sums require.
"""
from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from . import dd as ddm
from .backends import get_backend
from .basis import AssembledBasis, BasisSpec, assemble
from .constants import MC2
from .precision import (F64, F128, ConditioningError, PrecisionMode, eigh_sym,
                        gemm, split, gemm_hp)
from .radial import NuclearModel, moment, potential_moment


def _to_native_matrix(M, mode):
    if mode.kind == "mp":
        from .precision import to_mp_matrix

        return to_mp_matrix(M)
    B = get_backend(mode)
    if isinstance(M, np.ndarray) and M.dtype != object:
        return B.from_f64(M)
    return M


def _native_zeros(n, mode):
    return get_backend(mode).zeros((n, n))


def _matrix_f64(M, mode):
    return get_backend(mode).to_f64(M)


def assemble_matrices(basis: AssembledBasis, model: NuclearModel | None):
    """Overlap, Hamiltonian, and bare-potential matrices for one channel.

    Returns (S, H, V) in the basis mode's native container; V is None when no
    model is given (free particle).  H = mc^2*(S_ff - S_gg) + V_ff + V_gg +
    kinetic cross terms; exact symmetry is enforced by averaging.
    """
    B = get_backend(basis.mode)
    kappa = basis.kappa
    n = basis.dimension
    funcs = basis.functions
    zet = np.array([f.zeta if f.coefs else g.zeta for f, g in funcs])
    zsum = B.asarray(zet[:, None] + zet[None, :])

    mom_cache: dict = {}

    def mom(p):
        if p not in mom_cache:
            mom_cache[p] = moment(p, zsum, B)
        return mom_cache[p]

    pot_cache: dict = {}

    def pot(p):
        if p not in pot_cache:
            pot_cache[p] = potential_moment(p, zsum, model, B)
        return pot_cache[p]

    def accumulate(acc, terms_i, terms_j, table):
        for i, (ci, pi) in enumerate(terms_i):
            for cj, pj in terms_j:
                blk = table(pi + pj)
                acc = acc + blk * _outer(ci, cj, B)
        return acc

    def _outer(ci, cj, B):
        # ci, cj are backend vectors over the basis index
        if isinstance(ci, ddm.DD):
            return ddm.mul(ddm.DD(ci.hi[:, None], ci.lo[:, None]),
                           ddm.DD(cj.hi[None, :], cj.lo[None, :]))
        if hasattr(ci, "dtype") and ci.dtype == object:
            return ci[:, None] * cj[None, :]
        return np.asarray(ci)[:, None] * np.asarray(cj)[None, :]

    # vectors of term coefficients over the full basis index
    fterms, gterms = _stack_terms(basis, B)

    S = B.zeros((n, n))
    S = accumulate(S, fterms, fterms, mom)
    Sgg = accumulate(B.zeros((n, n)), gterms, gterms, mom)
    Hrest = (S - Sgg) * MC2
    S = S + Sgg

    V = None
    if model is not None:
        V = accumulate(B.zeros((n, n)), fterms, fterms, pot)
        V = accumulate(V, gterms, gterms, pot)

    # kinetic cross terms: -c (f_i | (d/dr - k/r) g_j) + c (g_i | (d/dr + k/r) f_j)
    dm_g = _apply_dplus(gterms, -kappa, zet, B)   # (d/dr - k/r) g
    dp_f = _apply_dplus(fterms, kappa, zet, B)    # (d/dr + k/r) f
    from .constants import C_AU

    Hc1 = accumulate(B.zeros((n, n)), fterms, dm_g, mom)
    Hc2 = accumulate(B.zeros((n, n)), gterms, dp_f, mom)
    Hc = Hc1 * (-C_AU) + Hc2 * C_AU
    Hc = (Hc + _transpose(Hc)) * 0.5

    H = Hrest + Hc if V is None else Hrest + Hc + V
    H = (H + _transpose(H)) * 0.5
    S = (S + _transpose(S)) * 0.5
    if V is not None:
        V = (V + _transpose(V)) * 0.5
    return S, H, V


def _transpose(M):
    if isinstance(M, ddm.DD):
        return ddm.DD(M.hi.T.copy(), M.lo.T.copy())
    return M.T.copy() if hasattr(M, "T") else M.transpose()


def _stack_terms(basis: AssembledBasis, B):
    """Represent each component as term lists with coefficient vectors over
    the full basis index (zero-padded where a family lacks a term).

    Each (function, power) pair carries at most one coefficient, so plain
    container assignment is enough.
    """
    n = basis.dimension
    fterms, gterms = [], []
    for select, sink in ((0, fterms), (1, gterms)):
        powers = sorted({p for pair in basis.functions for p in pair[select].powers})
        for p in powers:
            vec = B.zeros((n,))
            for i, pair in enumerate(basis.functions):
                comp = pair[select]
                for c, pw in zip(comp.coefs, comp.powers):
                    if pw == p:
                        vec[i] = c
            sink.append((vec, p))
    return fterms, gterms


def _apply_dplus(terms, kappa, zetas, B):
    """(d/dr + kappa/r) on stacked terms; zetas vary along the basis index."""
    zvec = B.asarray(zetas)
    out = []
    for c, p in terms:
        if p + kappa != 0:
            out.append((c * float(p + kappa), p - 1))
        out.append((c * zvec * (-2.0), p + 1))
    return out


# ---------------------------------------------------------------------------
# orthonormalization and solve
# ---------------------------------------------------------------------------

def orthonormalize(S, method: str, mode: PrecisionMode = F64, diag: str = "spectral",
                   warn_sink: list | None = None):
    """Return V with V^T S V = I.

    method: "symmetric" (S^-1/2), "canonical" (W s^-1/2, sign-fixed columns),
    or "cholesky" (L^-T).  Negative eigenvalues within -10*u*||S|| are folded
    to their absolute value (the singular-value fallback); anything worse
    raises ConditioningError.
    """
    B = get_backend(mode)
    S = _to_native_matrix(S, mode)
    if method == "cholesky":
        return _cholesky_orth(S, mode)
    w, W = eigh_sym(S, mode)
    wf = _eigvals_f64(w, mode)
    smax = float(np.max(np.abs(wf)))
    tol = 10.0 * mode.u * smax
    if np.min(wf) < -tol:
        raise ConditioningError(
            f"overlap matrix indefinite: min eigenvalue {np.min(wf):.3e}",
            min_sigma=float(np.min(wf)))
    if np.min(wf) <= 0:
        msg = f"overlap eigenvalues near zero (min {np.min(wf):.3e}); using |w| (SVD fallback)"
        if warn_sink is not None:
            warn_sink.append(msg)
        else:
            _warnings.warn(msg)
        if diag == "spectral":
            w = _abs_eigs(w, mode, floor=tol if tol > 0 else 1e-300)
        else:
            w = _abs_eigs(w, mode, floor=tol if tol > 0 else 1e-300)
    inv_root = _inv_sqrt_diag(w, mode)
    Wm = W
    if method == "canonical":
        Vc = _col_scale(Wm, inv_root, mode)
        return _fix_column_signs(Vc, mode)
    if method == "symmetric":
        half = _col_scale(Wm, inv_root, mode)
        return gemm(half, _transpose_native(Wm, mode), mode)
    raise ValueError(f"unknown orthonormalization method {method!r}")


def _transpose_native(M, mode):
    if mode.kind == "f128":
        return ddm.DD(M.hi.T.copy(), M.lo.T.copy())
    if mode.kind == "mp":
        return M.T
    return M.T


def _eigvals_f64(w, mode):
    if mode.kind == "f64":
        return np.asarray(w)
    if mode.kind == "f128":
        return w.float()
    return np.array([float(w[i]) for i in range(len(w))])


def _abs_eigs(w, mode, floor):
    if mode.kind == "f64":
        return np.maximum(np.abs(w), floor)
    if mode.kind == "f128":
        out = ddm.abs_(w)
        mask = out.hi < floor
        return ddm.where(mask, ddm.DD(np.full(out.shape, floor)), out)
    import mpmath

    out = w.copy()
    for i in range(len(w)):
        v = abs(w[i])
        out[i] = v if v > floor else mpmath.mpf(floor)
    return out


def _inv_sqrt_diag(w, mode):
    B = get_backend(mode)
    if mode.kind == "mp":
        import mpmath

        return [1 / mpmath.sqrt(w[i]) for i in range(len(w))]
    return 1.0 / B.sqrt(w)


def _col_scale(M, scale, mode):
    if mode.kind == "f64":
        return M * np.asarray(scale)[None, :]
    if mode.kind == "f128":
        return ddm.mul(M, ddm.DD(scale.hi[None, :], scale.lo[None, :]))
    out = M.copy()
    for j in range(M.cols):
        for i in range(M.rows):
            out[i, j] = M[i, j] * scale[j]
    return out


def _fix_column_signs(V, mode):
    Vf = _matrix_f64(V, mode) if mode.kind != "mp" else np.array(
        [[float(V[i, j]) for j in range(V.cols)] for i in range(V.rows)])
    idx = np.argmax(np.abs(Vf), axis=0)
    signs = np.sign(Vf[idx, np.arange(Vf.shape[1])])
    signs[signs == 0] = 1.0
    if mode.kind == "f64":
        return V * signs[None, :]
    if mode.kind == "f128":
        return ddm.scale(V, signs[None, :])
    out = V.copy()
    for j in range(V.cols):
        if signs[j] < 0:
            for i in range(V.rows):
                out[i, j] = -V[i, j]
    return out


def _cholesky_orth(S, mode):
    if mode.kind == "f64":
        from scipy.linalg import cholesky, solve_triangular

        L = cholesky(np.asarray(S), lower=True)
        return solve_triangular(L, np.eye(len(L)), lower=True).T
    if mode.kind == "f128":
        L = _dd_cholesky(S)
        n = L.hi.shape[0]
        inv = _dd_tri_inverse(L)
        return ddm.DD(inv.hi.T.copy(), inv.lo.T.copy())
    import mpmath

    L = mpmath.cholesky(S)
    n = L.rows
    inv = mpmath.inverse(L)
    return inv.T


def _dd_cholesky(A: ddm.DD) -> ddm.DD:
    n = A.hi.shape[0]
    L = ddm.DD.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s = ddm.add(s, -ddm.mul(L[j, k], L[j, k]))
        if float(s.hi) <= 0:
            raise ConditioningError("nonpositive pivot in Cholesky", min_sigma=float(s.hi))
        ljj = ddm.sqrt(s)
        L[j, j] = ljj
        if j + 1 < n:
            col = A[j + 1:, j]
            for k in range(j):
                col = ddm.add(col, -ddm.mul(L[j + 1:, k], L[j, k].broadcast_to(col.shape)))
            L[j + 1:, j] = ddm.div(col, ljj.broadcast_to(col.shape))
    return L


def _dd_tri_inverse(L: ddm.DD) -> ddm.DD:
    n = L.hi.shape[0]
    inv = ddm.DD.zeros((n, n))
    for j in range(n):
        e = ddm.DD.zeros((n,))
        e[j] = ddm.DD(np.asarray(1.0))
        x = ddm.DD.zeros((n,))
        for i in range(n):
            s = e[i]
            if i:
                s = ddm.add(s, -ddm.dot(L[i, :i], x[:i]))
            x[i] = ddm.div(s, L[i, i])
        inv[:, j] = x
    return inv


@dataclass
class SpectrumSolution:
    """Solved channel: energies (ascending), coefficients, class labels."""

    kappa: int
    mode: PrecisionMode
    energies: np.ndarray            # float64 view, ascending
    coefficients: object            # native matrix, columns = states
    energies_native: object         # native vector
    neg_mask: np.ndarray            # True = NegativeContinuumLike (sea)
    min_overlap_eig: float
    warnings: list = field(default_factory=list)
    scheme: str = ""
    charge: float = 0.0

    @property
    def n_states(self) -> int:
        return len(self.energies)

    @property
    def class_labels(self) -> list:
        return ["NegativeContinuumLike" if m else "PositiveLike" for m in self.neg_mask]

    def coefficients_f64(self) -> np.ndarray:
        if self.mode.kind == "f64":
            return np.asarray(self.coefficients)
        if self.mode.kind == "f128":
            return self.coefficients.float()
        C = self.coefficients
        return np.array([[float(C[i, j]) for j in range(C.cols)] for i in range(C.rows)])

    def lowest_positive_index(self) -> int:
        pos = np.where(~self.neg_mask)[0]
        return int(pos[np.argmin(self.energies[pos])])


def _balanced_neg_mask(energies_f64: np.ndarray) -> np.ndarray:
    n = len(energies_f64)
    order = np.argsort(energies_f64, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[: n // 2]] = True
    return mask


def solve(H, S, mode: PrecisionMode = F64, method: str = "symmetric",
          kappa: int = 0, scheme: str = "", charge: float = 0.0) -> SpectrumSolution:
    """Solve H C = S C eps at the given precision.

    Residual satisfies ||H C - S C eps||_max <= 100 u ||H||_max / min sigma(S).
    States are sorted ascending; the lowest half is the sea class.
    """
    warn_sink: list = []
    H = _to_native_matrix(H, mode)
    S = _to_native_matrix(S, mode)
    V = orthonormalize(S, method, mode, warn_sink=warn_sink)
    Hp = gemm(gemm(_transpose_native(V, mode), H, mode), V, mode)
    Hp = _symmetrize(Hp, mode)
    w, Cp = eigh_sym(Hp, mode)
    C = gemm(V, Cp, mode)
    wf = _eigvals_f64(w, mode)
    order = np.argsort(wf, kind="stable")
    wf = wf[order]
    C = _col_permute(C, order, mode)
    w = _vec_permute(w, order, mode)
    svals = np.abs(np.linalg.eigvalsh(_matrix_f64(S, mode) if mode.kind != "mp"
                                      else np.array([[float(S[i, j]) for j in range(S.cols)]
                                                     for i in range(S.rows)])))
    min_sig = float(np.min(svals))
    if min_sig < 10.0 * mode.u:
        warn_sink.append(f"min sigma(S) = {min_sig:.3e} below 10u: numerical-noise regime")
    return SpectrumSolution(
        kappa=kappa, mode=mode, energies=wf, coefficients=C, energies_native=w,
        neg_mask=_balanced_neg_mask(wf), min_overlap_eig=min_sig,
        warnings=warn_sink, scheme=scheme, charge=charge)


def _symmetrize(M, mode):
    return (M + _transpose_native(M, mode)) * 0.5 if mode.kind != "f128" else \
        ddm.mul_pow2(ddm.add(M, ddm.DD(M.hi.T.copy(), M.lo.T.copy())), 0.5)


def _col_permute(C, order, mode):
    if mode.kind == "f64":
        return C[:, order]
    if mode.kind == "f128":
        return C[:, order]
    import mpmath

    out = mpmath.matrix(C.rows, C.cols)
    for jnew, jold in enumerate(order):
        for i in range(C.rows):
            out[i, jnew] = C[i, int(jold)]
    return out


def _vec_permute(w, order, mode):
    if mode.kind == "f64":
        return np.asarray(w)[order]
    if mode.kind == "f128":
        return w[order]
    import mpmath

    out = mpmath.matrix(len(order), 1)
    for inew, iold in enumerate(order):
        out[inew] = w[int(iold)]
    return out


def solve_channel(spec: BasisSpec, model: NuclearModel | None,
                  mode: PrecisionMode = F64, method: str = "symmetric",
                  solver_mode: PrecisionMode | None = None) -> SpectrumSolution:
    """Assemble and solve one channel.

    The eigenproblem itself runs at ``solver_mode`` (by default f128 for
    f64/f128 runs, the run precision for mp runs): downstream density-matrix
    and contraction arithmetic at the run ``mode`` then carries the documented
    u N / min sigma(S) rounding behavior without eigensolver contamination.
    """
    if solver_mode is None:
        solver_mode = F128 if mode.kind in ("f64", "f128") else mode
    basis = assemble(spec, solver_mode)
    S, H, _ = assemble_matrices(basis, model)
    charge = 0.0 if model is None else model.z
    sol = solve(H, S, solver_mode, method, kappa=spec.kappa, scheme=spec.scheme,
                charge=charge)
    return sol


def potential_matrix(spec: BasisSpec, model: NuclearModel,
                     mode: PrecisionMode = F64) -> object:
    """Bare nuclear-potential matrix in the channel basis (native container)."""
    basis = assemble(spec, mode)
    _, _, V = assemble_matrices(basis, model)
    return V


def spectrum_norms(sol: SpectrumSolution):
    """Diagnostic table of (eps_n, ||c_n||_2)."""
    C = sol.coefficients_f64()
    return np.column_stack([sol.energies, np.linalg.norm(C, axis=0)])


def residual_max(sol: SpectrumSolution, H, S) -> float:
    """max |H C - S C eps| over all entries (f64 evaluation)."""
    Hf = _matrix_f64(_to_native_matrix(H, sol.mode), sol.mode)
    Sf = _matrix_f64(_to_native_matrix(S, sol.mode), sol.mode)
    C = sol.coefficients_f64()
    R = Hf @ C - Sf @ C * sol.energies[None, :]
    return float(np.max(np.abs(R)))


def orthonormality_defect(sol: SpectrumSolution, S) -> float:
    Sf = _matrix_f64(_to_native_matrix(S, sol.mode), sol.mode)
    C = sol.coefficients_f64()
    return float(np.max(np.abs(C.T @ Sf @ C - np.eye(C.shape[1]))))


def ground_state_energy(spec: BasisSpec, model: NuclearModel,
                        mode: PrecisionMode = F64) -> float:
    """Binding energy (eps - mc^2, Hartree) of the lowest PositiveLike state."""
    sol = solve_channel(spec, model, mode)
    return float(sol.energies[sol.lowest_positive_index()] - MC2)
