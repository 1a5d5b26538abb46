"""Asymmetric hyperbolic secant distribution HSD(tau).

Density (2/pi) sech(x) [tau 1{x<0} + (1-tau) 1{x>=0}], so the quantile marker
tau is exactly the mass left of zero: cdf(0) = tau.  The distribution function
uses arctan(tanh(x/2)) on both half-lines (the form the density integrates to;
it is bounded and makes F continuous with limits 0 and 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sech(x):
    """sech(x) = 2 e^{-|x|} / (1 + e^{-2|x|}), overflow-free."""
    ax = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-ax)
    return 2.0 * e / (1.0 + e * e)


@dataclass(frozen=True)
class AsymmetricHSD:
    """Hyperbolic secant distribution tilted by the quantile marker tau."""

    tau: float

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be inside (0, 1), got {self.tau}")

    def pdf(self, x):
        """Density at x; symmetric about 0 when tau = 0.5."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("pdf requires finite x")
        weight = np.where(x < 0, self.tau, 1.0 - self.tau)
        out = (2.0 / math.pi) * sech(x) * weight
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """Distribution function; accepts +-inf, clamps rounding drift into [0, 1]."""
        x = np.asarray(x, dtype=float)
        if np.any(np.isnan(x)):
            raise ValueError("cdf requires non-NaN x")
        g = np.arctan(np.tanh(x / 2.0))
        scale = np.where(x <= 0, 4.0 * self.tau, 4.0 * (1.0 - self.tau)) / math.pi
        out = np.clip(self.tau + scale * g, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def inv_cdf(self, p):
        """Quantile function, the algebraic inverse of each cdf branch.

        For p <= tau: 2 artanh(tan(pi (p - tau) / (4 tau))); for p > tau the
        same with 1 - tau in the denominator.  p must lie strictly in (0, 1).
        """
        p = np.asarray(p, dtype=float)
        if not np.all((p > 0.0) & (p < 1.0)):
            raise ValueError("inv_cdf requires p strictly inside (0, 1)")
        lower = p <= self.tau
        denom = np.where(lower, self.tau, 1.0 - self.tau)
        out = 2.0 * np.arctanh(np.tan(math.pi * (p - self.tau) / (4.0 * denom)))
        return float(out) if out.ndim == 0 else out

    def sample(self, seed: int, n: int) -> np.ndarray:
        """Inverse-transform sample of size n, deterministic given the seed."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        rng = np.random.default_rng(seed)
        # keep u strictly inside (0, 1); the endpoints map to +-inf
        u = np.clip(rng.random(n), 1e-15, 1.0 - 1e-15)
        return self.inv_cdf(u)
