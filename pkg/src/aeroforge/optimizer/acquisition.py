"""Expected improvement and feasibility probabilities (minimization)."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * z * z)


def normal_cdf(z):
    return ndtr(np.asarray(z, dtype=float))


def expected_improvement(mean, sigma, f_best: float, xi: float = 0.0):
    """E[max(f_best - f(x), 0)] for f(x) ~ N(mean, sigma^2)."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = f_best - mean - xi
    safe = np.where(sigma > 0, sigma, 1.0)
    z = imp / safe
    ei = imp * normal_cdf(z) + sigma * normal_pdf(z)
    ei = np.where(sigma > 0, ei, np.maximum(imp, 0.0))
    out = np.maximum(ei, 0.0)
    return float(out) if out.ndim == 0 else out


def probability_below(mean, sigma, threshold: float):
    """P[f(x) <= threshold]; a step function when sigma is zero."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    safe = np.where(sigma > 0, sigma, 1.0)
    p = np.where(sigma > 0, normal_cdf((threshold - mean) / safe), (mean <= threshold).astype(float))
    return float(p) if p.ndim == 0 else p
