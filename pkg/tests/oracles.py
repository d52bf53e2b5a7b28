"""Independent test oracles.

exact_min_mean: E M_n for deterministic binary branching computed from the
exact distributional recursion of the minimum.  With two independent subtrees
per node, the CDF F_n(x) = P(M_n <= x) satisfies

    F_{n+1}(x) = 1 - (1 - E_s F_n(x - s))^2 = c(x) * (2 - c(x)),
    c(x) = E_s F_n(x - s),

with F_0 = 1{x >= 0}.  The iteration runs on a window moving at the linear
speed gamma, tracks F itself (representable down to ~1e-300, so the pulled
front's driving tail is never truncated to machine epsilon), and uses direct
convolution, which preserves relative precision on positive summands where
FFT convolution would inject absolute-scale noise.

This oracle shares nothing with the simulator: no tree keys, no sampling, no
beam.  It is the reference the beam's truncation bias is measured against.
"""

from __future__ import annotations

import numpy as np


def exact_min_mean(step_mu: float, step_sigma: float, gamma: float,
                   n_targets: set[int], h: float = 0.02, left: float = 250.0,
                   right: float = 80.0) -> dict[int, float]:
    """E M_n for binary deterministic branching and Gaussian steps."""
    u = np.arange(-left, right + h / 2, h)
    half = int(10.0 * step_sigma / h)
    ker_x = np.arange(-half, half + 1) * h
    # Kernel of (step - gamma): the window moves by gamma per generation.
    ker = np.exp(-0.5 * ((ker_x + gamma - step_mu) / step_sigma) ** 2)
    ker /= ker.sum()
    F = (u >= 0).astype(float)
    out: dict[int, float] = {}
    for g in range(1, max(n_targets) + 1):
        padded = np.concatenate([np.zeros(half), F, np.ones(half)])
        c = np.convolve(padded, ker, mode="valid")
        np.clip(c, 0.0, 1.0, out=c)
        F = c * (2.0 - c)
        if g in n_targets:
            pos = u >= 0
            eu = float(np.trapezoid(1.0 - F[pos], u[pos])
                       - np.trapezoid(F[~pos], u[~pos]))
            out[g] = gamma * g + eu
    return out
