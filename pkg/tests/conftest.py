"""Shared independent oracles for the test suite.

These deliberately avoid the solver paths they check: the equilibrium
oracle is a cyclic single-coordinate relaxation (no Newton step, no
coupled Hessian), and the propagator oracle goes through dense
scaling-and-squaring instead of eigendecomposition.
"""

import numpy as np
from scipy.optimize import brentq


def relax_equilibrium(n_ions, max_sweeps=2000, move_tol=1e-13):
    """Brute-force equilibrium of n equal-charge ions in the common scaled
    well: relax one coordinate at a time to its zero-force point until the
    whole chain stops moving."""
    u = (np.arange(n_ions) - (n_ions - 1) / 2.0) * 1.3

    def slope(x, i):
        s = x
        for j in range(n_ions):
            if j != i:
                s -= np.sign(x - u[j]) / (x - u[j]) ** 2
        return s

    for _ in range(max_sweeps):
        moved = 0.0
        for i in range(n_ions):
            lo = u[i - 1] + 1e-8 if i > 0 else u[i] - 3.0
            hi = u[i + 1] - 1e-8 if i < n_ions - 1 else u[i] + 3.0
            while i == 0 and slope(lo, i) > 0:
                lo -= 2.0
            while i == n_ions - 1 and slope(hi, i) < 0:
                hi += 2.0
            x = brentq(slope, lo, hi, args=(i,), xtol=1e-14, rtol=8.9e-16)
            moved = max(moved, abs(x - u[i]))
            u[i] = x
        if moved < move_tol:
            break
    return u
