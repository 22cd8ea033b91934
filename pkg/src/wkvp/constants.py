"""Physical constants (CODATA 2022) in Hartree atomic units."""

ALPHA_INV = 137.035999177
"""Inverse fine-structure constant."""

C_AU = ALPHA_INV
"""Speed of light in atomic units (hbar = m_e = e = 4*pi*eps0 = 1)."""

MC2 = C_AU * C_AU
"""Electron rest energy m c^2 in Hartree."""

A0_FM = 5.29177210903e4
"""Bohr radius in femtometres."""

EH_EV = 27.211386245981
"""Hartree energy in electronvolt."""

CONSTANT_SET = "CODATA2022"


def fm_to_a0(r_fm: float) -> float:
    """Convert a length in fm to Bohr radii."""
    return r_fm / A0_FM
