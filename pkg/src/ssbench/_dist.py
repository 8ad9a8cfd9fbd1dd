"""Tail probabilities from regularized incomplete gamma/beta functions."""
from __future__ import annotations

import numpy as np
from scipy import special


def chi2_sf(x, dof):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 1.0, special.gammaincc(0.5 * dof, 0.5 * np.maximum(x, 0)))


def chi2_cdf(x, dof):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 0.0, special.gammainc(0.5 * dof, 0.5 * np.maximum(x, 0)))


def f_cdf(x, d1, d2):
    x = np.asarray(x, dtype=float)
    z = d1 * np.maximum(x, 0) / (d1 * np.maximum(x, 0) + d2)
    return np.where(x <= 0, 0.0, special.betainc(0.5 * d1, 0.5 * d2, z))


def f_sf(x, d1, d2):
    x = np.asarray(x, dtype=float)
    z = d2 / (d2 + d1 * np.maximum(x, 0))
    return np.where(x <= 0, 1.0, special.betainc(0.5 * d2, 0.5 * d1, z))


def t_two_sided(t, dof):
    """P(|T| > |t|) for Student t with ``dof`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    return special.betainc(0.5 * dof, 0.5, dof / (dof + t * t))
