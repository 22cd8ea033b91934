"""Generate the bundled reference-orbital exponent lists.

For each element we use an even-tempered ladder wide enough to converge the
1s_1/2 orbital far below the energy-shift tolerance: zeta from ~0.002 Z^2 (the
diffuse tail of the contracted 1s) up to 1e10 a0^-2 (nuclear-region detail),
ratio ~2.05.  The shift pipeline's reference sensitivity at this density is
below 1e-4 eV (checked by widening/densifying scans in the test suite).

Run:  python tools/make_reference_bases.py
"""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from wkvp.basis import ReferenceBasis, save_reference_basis  # noqa: E402

ELEMENTS = {
    # element: Z
    "kr": 36,
    "xe": 54,
    "yb": 70,
    "pb": 82,
    "rn": 86,
    "u": 92,
    "mt": 109,
}

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "wkvp", "data", "reference_bases")


def ladder(z):
    lo = max(0.002 * z * z, 1.0)
    hi = 1e10
    n = int(np.ceil(np.log(hi / lo) / np.log(2.05))) + 1
    return np.geomspace(lo, hi, n)


def main():
    os.makedirs(OUT, exist_ok=True)
    for el, z in ELEMENTS.items():
        exps = ladder(z)
        rb = ReferenceBasis(el.capitalize(), -1, tuple(float(v) for v in exps),
                            provenance=f"even-tempered [{exps[0]:.3g}, {exps[-1]:.3g}] N={len(exps)}")
        path = os.path.join(OUT, f"{el}.txt")
        save_reference_basis(rb, path)
        print(f"{el}: N={len(exps)} zeta in [{exps[0]:.4g}, {exps[-1]:.4g}]")


if __name__ == "__main__":
    main()
