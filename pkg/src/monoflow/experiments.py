"""Numerical experiments shared by the command line and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import evaluate_objective
from .evolution import Trajectory, cnorm, h1seminorm, integrate_reference, integrate_yosida
from .sensitivity import value_and_gradient

__all__ = [
    "SweepRow",
    "yosida_sweep",
    "gradient_check",
    "non_increasing",
    "tail_non_increasing",
]


@dataclass
class SweepRow:
    lam: float
    c_error: float
    bound: float
    ratio: float
    observed_order: float  # nan on the first row
    deriv_ratio: float  # |z_lam'|_{L2} / |z_ref'|_{L2}


def yosida_sweep(pd, grid, load_fn, lams, refine=8):
    """Compare Yosida trajectories with a reference solution on a finer grid.

    ``bound = sqrt(lam / gamma_Q) |z_ref'|_{L2}`` is the a-priori bound on
    ``|z_lam - z_ref|_C``; ``observed_order`` is the log-log slope of the
    error between consecutive ``lam`` values.
    """
    fine = grid.refine(refine)
    z_ref = integrate_reference(pd, Trajectory.from_function(fine, load_fn))
    ref_speed = h1seminorm(z_ref)
    z_ref_coarse = z_ref.subsample(refine)
    l = Trajectory.from_function(grid, load_fn)
    rows = []
    for lam in lams:
        z = integrate_yosida(pd, lam, l)
        err = cnorm(z - z_ref_coarse)
        bound = math.sqrt(lam / pd.gamma_q) * ref_speed
        order = math.nan
        if rows and err > 0 and rows[-1].c_error > 0 and lam != rows[-1].lam:
            order = math.log(err / rows[-1].c_error) / math.log(lam / rows[-1].lam)
        ratio = err / bound if bound > 0 else (0.0 if err == 0 else math.inf)
        dratio = h1seminorm(z) / ref_speed if ref_speed > 0 else 0.0
        rows.append(SweepRow(lam, err, bound, ratio, order, dratio))
    return rows, z_ref


def gradient_check(pd, p, l, objective, n_dirs=20, t=1e-5, seed=0):
    """Central differences against the adjoint gradient in random directions.

    Returns ``(F, rows)`` with rows ``(direction, fd, adjoint, rel_error)``;
    the relative error is taken with respect to ``max(|fd|, |adjoint|)``.
    """
    F, g, _ = value_and_gradient(pd, p, l, objective)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_dirs):
        v = rng.standard_normal(l.values.shape)
        v[0] = 0.0
        h = Trajectory(l.grid, v)
        fd = (evaluate_objective(pd, p, l + h * t, objective)
              - evaluate_objective(pd, p, l - h * t, objective)) / (2 * t)
        an = float(np.sum(g.values * v))
        scale = max(abs(fd), abs(an))
        rows.append((i, fd, an, abs(fd - an) / scale if scale > 0 else 0.0))
    return F, rows


def non_increasing(values, rtol=1e-12):
    return all(b <= a * (1 + rtol) for a, b in zip(values, values[1:]))


def tail_non_increasing(values, k=3):
    """Non-increasing over the last ``k`` entries."""
    return non_increasing(list(values)[-k:])
