"""Vacuum-polarization density matrices and radial densities.

Sign conventions (anchored by the symmetry suite and the reproduced energy
shifts): the per-channel total-VP density matrix is

    D_vp = (|k|/4pi) [ sum_sea c c^T - sum_rest c c^T ],

so that r^2 rho(r) = -Tr(D Omega(r)) gives a negative charge density for an
occupied-orbital reference matrix D_ref = c c^T.  The linear-response matrix
follows from the cross-gap projector derivative of the free problem,

    D_lin = -(|k|/8pi) sum_{n rest, l sea} W_nl (c_n c_l^T + c_l c_n^T),
    W_nl  = 4 (phi_n | V | phi_l) / (eps_n - eps_l),

which matches the central-difference-in-Z derivative of D_vp to truncation
order.  The sea-referenced variant subtracts the free-vacuum matrix per
channel; summed over +-kappa it is identical to D_vp (the free parts cancel by
charge conjugation) but it keeps the huge conjugation-even parts out of every
downstream contraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dd as ddm
from .basis import AssembledBasis
from .dirac import SpectrumSolution
from .precision import F64, PrecisionMode, convert_matrix, gemm
from .backends import get_backend

FOUR_PI = 4.0 * np.pi


@dataclass
class DensityMatrix:
    kappa: int
    kind: str                     # "vp" | "vp_sea" | "linear_vp" | "wk" | "reference"
    matrix: object                # native container at `mode`
    mode: PrecisionMode
    meta: dict = field(default_factory=dict)

    def to_f64(self) -> np.ndarray:
        return convert_matrix(self.matrix, F64)

    def symmetry_defect(self) -> float:
        M = self.to_f64()
        scale = np.max(np.abs(M)) or 1.0
        return float(np.max(np.abs(M - M.T)) / scale)


def _columns(sol: SpectrumSolution, mask, mode: PrecisionMode):
    """Selected coefficient columns converted to the given mode."""
    C = convert_matrix(sol.coefficients, mode)
    idx = np.where(mask)[0]
    if mode.kind == "mp":
        import mpmath

        out = mpmath.matrix(C.rows, len(idx))
        for a, j in enumerate(idx):
            for i in range(C.rows):
                out[i, a] = C[i, int(j)]
        return out
    return C[:, idx]


def _scaled_gram(Cpart, mode: PrecisionMode, scale: float):
    """scale * C C^T at the given mode."""
    if mode.kind == "mp":
        return (Cpart * Cpart.T) * scale
    G = gemm(Cpart, Cpart.T if not isinstance(Cpart, ddm.DD) else
             ddm.DD(Cpart.hi.T.copy(), Cpart.lo.T.copy()), mode)
    if mode.kind == "f64":
        return np.asarray(G.float() if isinstance(G, ddm.DD) else G) * scale
    return ddm.scale(G, np.asarray(scale))


def vp_dmat(sol: SpectrumSolution, mode: PrecisionMode | None = None) -> DensityMatrix:
    """Total VP density matrix of one channel (Schwinger split)."""
    mode = mode or sol.mode
    pref = abs(sol.kappa) / FOUR_PI
    Dn = _scaled_gram(_columns(sol, sol.neg_mask, mode), mode, pref)
    Dp = _scaled_gram(_columns(sol, ~sol.neg_mask, mode), mode, pref)
    D = Dn - Dp if mode.kind != "f128" else ddm.add(Dn, -Dp)
    return DensityMatrix(sol.kappa, "vp", D, mode,
                         {"charge": sol.charge, "scheme": sol.scheme})


def vp_dmat_sea(sol: SpectrumSolution, free_sol: SpectrumSolution,
                mode: PrecisionMode | None = None) -> DensityMatrix:
    """Sea-referenced VP density matrix: 2*(|k|/4pi)[sum_sea - sum_sea(free)].

    Equals vp_dmat minus the free-channel vp_dmat; the +-kappa pair sum is
    unchanged while per-channel magnitudes drop to the physical scale.
    """
    mode = mode or sol.mode
    pref = 2.0 * abs(sol.kappa) / FOUR_PI
    Dn = _scaled_gram(_columns(sol, sol.neg_mask, mode), mode, pref)
    D0 = _scaled_gram(_columns(free_sol, free_sol.neg_mask, mode), mode, pref)
    D = Dn - D0 if mode.kind != "f128" else ddm.add(Dn, -D0)
    return DensityMatrix(sol.kappa, "vp_sea", D, mode,
                         {"charge": sol.charge, "scheme": sol.scheme})


def linear_vp_dmat(free_sol: SpectrumSolution, Vmat, mode: PrecisionMode | None = None,
                   ) -> DensityMatrix:
    """First-order (in the potential) VP density matrix from the free spectrum."""
    mode = mode or free_sol.mode
    if abs(free_sol.charge) > 0:
        raise ValueError("linear_vp_dmat needs the free-particle solution")
    Vn = convert_matrix(Vmat, mode)
    Cp = _columns(free_sol, ~free_sol.neg_mask, mode)
    Cn = _columns(free_sol, free_sol.neg_mask, mode)
    ep = free_sol.energies[~free_sol.neg_mask]
    en = free_sol.energies[free_sol.neg_mask]
    gap = ep[:, None] - en[None, :]
    if np.min(np.abs(gap)) < 1e-6:
        raise ValueError("vanishing cross-gap denominator")
    pref = abs(free_sol.kappa) / (2.0 * FOUR_PI)
    if mode.kind == "mp":
        import mpmath

        Vel = Cp.T * Vn * Cn
        W = mpmath.matrix(Vel.rows, Vel.cols)
        for i in range(Vel.rows):
            for j in range(Vel.cols):
                W[i, j] = 4 * Vel[i, j] / (free_sol.energies_native[int(np.where(~free_sol.neg_mask)[0][i])]
                                           - free_sol.energies_native[int(np.where(free_sol.neg_mask)[0][j])])
        A = Cp * W * Cn.T
        D = (A + A.T) * (-pref)
        return DensityMatrix(free_sol.kappa, "linear_vp", D, mode, {"scheme": free_sol.scheme})
    if mode.kind == "f64":
        Vel = Cp.T @ Vn @ Cn
        W = 4.0 * Vel / gap
        A = Cp @ W @ Cn.T
        D = -pref * (A + A.T)
        return DensityMatrix(free_sol.kappa, "linear_vp", D, mode, {"scheme": free_sol.scheme})
    # f128: energies at native (dd) precision when available
    CpT = ddm.DD(Cp.hi.T.copy(), Cp.lo.T.copy())
    Vel = gemm(gemm(CpT, Vn, mode), Cn, mode)
    en_native = free_sol.energies_native
    if isinstance(en_native, ddm.DD):
        epd = en_native[np.where(~free_sol.neg_mask)[0]]
        endd = en_native[np.where(free_sol.neg_mask)[0]]
        gap_dd = ddm.add(ddm.DD(epd.hi[:, None], epd.lo[:, None]),
                         -ddm.DD(endd.hi[None, :], endd.lo[None, :]))
    else:
        gap_dd = ddm.DD(gap)
    W = ddm.mul_pow2(ddm.div(Vel, gap_dd), 4.0)
    A = gemm(gemm(Cp, W, mode), ddm.DD(Cn.hi.T.copy(), Cn.lo.T.copy()), mode)
    D = ddm.scale(ddm.add(A, ddm.DD(A.hi.T.copy(), A.lo.T.copy())), -pref)
    return DensityMatrix(free_sol.kappa, "linear_vp", D, mode, {"scheme": free_sol.scheme})


def wk_dmat(vp: DensityMatrix, lin: DensityMatrix) -> DensityMatrix:
    """Nonlinear part: elementwise vp - lin."""
    if vp.kappa != lin.kappa or vp.mode.label != lin.mode.label:
        raise ValueError("mismatched channels or precisions")
    D = vp.matrix - lin.matrix if vp.mode.kind != "f128" else ddm.add(vp.matrix, -lin.matrix)
    return DensityMatrix(vp.kappa, "wk", D, vp.mode, dict(vp.meta))


def reference_dmat(sol: SpectrumSolution, mode: PrecisionMode | None = None) -> DensityMatrix:
    """Rank-1 density matrix of the lowest PositiveLike state."""
    mode = mode or sol.mode
    i = sol.lowest_positive_index()
    mask = np.zeros(sol.n_states, dtype=bool)
    mask[i] = True
    D = _scaled_gram(_columns(sol, mask, mode), mode, 1.0)
    return DensityMatrix(sol.kappa, "reference", D, mode,
                         {"charge": sol.charge, "scheme": sol.scheme,
                          "energy": float(sol.energies[i])})


def c_symmetrized_vp(sol_plus: SpectrumSolution, sol_minus: SpectrumSolution,
                     mode: PrecisionMode | None = None) -> DensityMatrix:
    """(D_vp(Z) - D_vp(-Z))/2: restores charge-conjugation symmetry in RKB."""
    if sol_plus.n_states != sol_minus.n_states or sol_plus.kappa != sol_minus.kappa:
        raise ValueError("mismatched solutions")
    mode = mode or sol_plus.mode
    Dp = vp_dmat(sol_plus, mode)
    Dm = vp_dmat(sol_minus, mode)
    D = (Dp.matrix - Dm.matrix) * 0.5 if mode.kind != "f128" else \
        ddm.mul_pow2(ddm.add(Dp.matrix, -Dm.matrix), 0.5)
    return DensityMatrix(sol_plus.kappa, "vp", D, mode,
                         {"charge": sol_plus.charge, "scheme": sol_plus.scheme,
                          "c_symmetrized": True})


def positronic_vp(sol_e: SpectrumSolution, sol_p: SpectrumSolution,
                  mode: PrecisionMode | None = None) -> DensityMatrix:
    """VP density matrix from positive-energy solutions only.

    sol_e: electron problem (potential of charge +Z); sol_p: positron problem
    (potential sign flipped, i.e. charge -Z).  D = (|k|/4pi)[sum_pos(p) - sum_pos(e)].
    """
    if sol_e.n_states != sol_p.n_states or sol_e.kappa != sol_p.kappa:
        raise ValueError("mismatched solutions")
    mode = mode or sol_e.mode
    pref = abs(sol_e.kappa) / FOUR_PI
    Dp = _scaled_gram(_columns(sol_p, ~sol_p.neg_mask, mode), mode, pref)
    De = _scaled_gram(_columns(sol_e, ~sol_e.neg_mask, mode), mode, pref)
    D = Dp - De if mode.kind != "f128" else ddm.add(Dp, -De)
    return DensityMatrix(sol_e.kappa, "vp", D, mode,
                         {"charge": sol_e.charge, "scheme": sol_e.scheme,
                          "positronic": True})


# ---------------------------------------------------------------------------
# radial densities
# ---------------------------------------------------------------------------

def omega_value(basis: AssembledBasis, mu: int, nu: int, r):
    """Pointwise overlap distribution Omega_{mu nu}(r) (f64 grid evaluation)."""
    B = get_backend(F64)
    fm, gm = basis.functions[mu]
    fn, gn = basis.functions[nu]
    rr = np.asarray(r, dtype=float)
    out = np.zeros_like(rr)
    if fm.powers and fn.powers:
        out = out + B.mask_of(fm.eval(rr, B)) * B.mask_of(fn.eval(rr, B))
    if gm.powers and gn.powers:
        out = out + B.mask_of(gm.eval(rr, B)) * B.mask_of(gn.eval(rr, B))
    return out


def basis_values_on_grid(basis: AssembledBasis, grid, mode: PrecisionMode):
    """Component value matrices (n_r x n_basis) for f and g at the mode."""
    B = get_backend(mode)
    n = basis.dimension
    r = np.asarray(grid, dtype=float)
    Vf = B.zeros((len(r), n))
    Vg = B.zeros((len(r), n))
    for j, (f, g) in enumerate(basis.functions):
        if f.powers:
            Vf[:, j] = f.eval(r, B)
        if g.powers:
            Vg[:, j] = g.eval(r, B)
    return Vf, Vg


def radial_density(D: DensityMatrix, basis: AssembledBasis, grid) -> np.ndarray:
    """r^2 rho(r) = -Tr(D Omega(r)) per grid point (e/a0, electron charge -1)."""
    mode = D.mode
    Vf, Vg = basis_values_on_grid(basis, grid, mode)
    if mode.kind == "f64":
        Df = np.asarray(D.matrix)
        t = np.einsum("ri,ij,rj->r", Vf, Df, Vf) + np.einsum("ri,ij,rj->r", Vg, Df, Vg)
        return -t
    if mode.kind == "f128":
        T1 = gemm(Vf, D.matrix, mode)
        T2 = gemm(Vg, D.matrix, mode)
        s1 = ddm.sum_(ddm.mul(T1, Vf), axis=1)
        s2 = ddm.sum_(ddm.mul(T2, Vg), axis=1)
        return -(s1.float() + s2.float())
    # mp
    import mpmath

    Dm = D.matrix
    nr = Vf.shape[0]
    out = np.zeros(nr)
    n = basis.dimension
    for rdx in range(nr):
        vf = mpmath.matrix([[Vf[rdx, j] for j in range(n)]])
        vg = mpmath.matrix([[Vg[rdx, j] for j in range(n)]])
        t = (vf * Dm * vf.T)[0, 0] + (vg * Dm * vg.T)[0, 0]
        out[rdx] = -float(t)
    return out
