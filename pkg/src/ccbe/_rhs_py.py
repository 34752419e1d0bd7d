"""Vectorised numpy implementation of the pair-event kernel.

Mirrors ``_rhs_core.pyx`` operation for operation; used when the compiled
extension is unavailable or ``CCBE_PURE_PYTHON`` is set.
"""

import numpy as np


def rhs_kernel(N, t):
    """Return (dN_ext, lost_rate, breakage_weight_total).

    ``N`` is the per-cell particle number g*width.  ``dN_ext`` has one more
    entry than ``N``: slot 0 is the sub-grid bucket, slot c+1 is cell c.
    """
    cells = N.size
    dN = np.zeros(cells + 1)
    R = t.pair_rate * N[t.pi] * N[t.pj]

    # every event removes one particle from each partner
    dN[1:] -= np.bincount(t.pi, weights=R, minlength=cells)
    dN[1:] -= np.bincount(t.pj, weights=R, minlength=cells)

    keep = ~t.over
    lost = float(np.dot(R[t.over], t.psum[t.over]))

    Rk = R[keep]
    Rc = Rk * t.e_coag_pair[keep]
    dN += np.bincount(t.c_lo[keep], weights=Rc * t.c_nlo[keep], minlength=cells + 1)
    dN += np.bincount(t.c_hi[keep], weights=Rc * t.c_nhi[keep], minlength=cells + 1)

    Rb = Rk * (1.0 - t.e_coag_pair[keep])
    m = t.b_m[keep]
    W = np.bincount(m, weights=Rb * t.b_w[keep], minlength=cells + 1)
    # S[k] = sum of W over intervals strictly above k: all pairs whose
    # parent sum lies above interval k fill it completely
    S = np.cumsum(W[::-1])[::-1][1:]
    dN[:-1] += t.full_lo * S
    dN[1:] += t.full_hi * S
    dN += np.bincount(t.b_ilo[keep], weights=Rb * t.b_plo[keep], minlength=cells + 1)
    dN += np.bincount(t.b_ihi[keep], weights=Rb * t.b_phi[keep], minlength=cells + 1)
    return dN, lost, float(W.sum())
