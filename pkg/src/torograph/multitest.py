"""Multiple-testing helpers for edge selection."""

import numpy as np
from scipy import stats


def holm_adjust(pvalues):
    """Holm step-down adjusted p-values.

    Rejecting every hypothesis whose adjusted p-value is below ``alpha``
    controls the family-wise error rate at ``alpha``.
    """
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = (m - np.arange(m)) * p[order]
    adjusted = np.minimum(np.maximum.accumulate(scaled), 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out


def fisher_z_pvalue(r, dof):
    """Two-sided p-value of ``sqrt(dof) * atanh(r)`` under N(0, 1)."""
    r = np.clip(np.asarray(r, dtype=float), -1 + 1e-15, 1 - 1e-15)
    z = np.sqrt(dof) * np.arctanh(r)
    return z, 2.0 * stats.norm.sf(np.abs(z))
