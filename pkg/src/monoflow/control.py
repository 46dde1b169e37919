"""Reduced optimal control: objective, H^1 Riesz map, descent, continuation, SSC.

Controls are trajectories ``l`` with ``l(0) = 0``.  The descent loop is
gradient descent in the metric ``gamma <l', h'>`` (the Riesz representer
solves a two-point boundary value problem in time: homogeneous Dirichlet
at ``t = 0``, natural Neumann at ``t = T``) with Armijo backtracking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import LineSearchFailed
from .evolution import Trajectory, h1norm, integrate_smoothed
from .flow_rule import RegParams
from .linalg import solve_tridiagonal
from .sensitivity import HessianForm, value_and_gradient

log = logging.getLogger(__name__)

__all__ = [
    "evaluate_objective",
    "riesz_h1",
    "OptimizeOptions",
    "OptimizeReport",
    "optimize",
    "RegSchedule",
    "continuation",
    "ContinuationResult",
    "SSCResult",
    "ssc_verify",
    "growth_check",
    "random_directions",
    "h1_pencil_min_ratio",
]

EPS = np.finfo(float).eps


def _check_initial(l, tol=1e-14):
    if np.max(np.abs(l.values[0])) > tol:
        raise ValueError("controls must vanish at t = 0")


def evaluate_objective(pd, p, l, spec):
    _check_initial(l)
    z = integrate_smoothed(pd, p, l)
    return spec.value(z, l)


def _bvp_bands(N, tau):
    diag = np.full(N, 2.0 / tau)
    diag[-1] = 1.0 / tau
    off = np.full(N - 1, -1.0 / tau)
    return off, diag, off


def riesz_h1(g, gamma=1.0):
    """Representer ``delta`` of ``h -> <g, h>`` in the metric ``gamma <delta', h'>``.

    Solves ``gamma K delta = g`` on nodes ``1..N`` where ``K`` is the discrete
    ``-d^2/dt^2`` with ``delta_0 = 0`` and a Neumann row at ``t = T``.
    """
    grid = g.grid
    sub, diag, sup = _bvp_bands(grid.N, grid.tau)
    out = np.zeros_like(g.values)
    out[1:] = solve_tridiagonal(sub, diag, sup, g.values[1:]) / gamma
    return Trajectory(grid, out)


@dataclass
class OptimizeOptions:
    tol: float = 1e-8
    max_iter: int = 500
    c1: float = 1e-4
    max_halvings: int = 20
    metric: str = "h1"  # or "euclidean"
    bb_steps: bool = True

    def __post_init__(self):
        if self.metric not in ("h1", "euclidean"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class OptimizeReport:
    F: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    control: Trajectory | None = None
    converged: bool = False
    message: str = ""

    @property
    def iterations(self):
        return len(self.F) - 1

    @property
    def final_value(self):
        return self.F[-1]

    def rows(self):
        """``(iter, F, grad_norm, step)`` tuples; step is 0 for the start point."""
        steps = [0.0] + list(self.step)
        return [(i, f, g, s) for i, (f, g, s) in enumerate(zip(self.F, self.grad_norm, steps))]


def optimize(pd, p, l_init, spec, opts=None):
    """Armijo gradient descent on the reduced objective.

    The trial step is a Barzilai-Borwein estimate in the active metric
    (1 on the first iteration), halved until the Armijo condition holds.
    When the predicted decrease drops below the rounding level of ``F`` a
    non-increasing step is accepted; if none exists the loop stops.
    """
    opts = opts or OptimizeOptions()
    _check_initial(l_init)
    l = l_init.copy()
    gamma = spec.gamma
    metric = (lambda g: riesz_h1(g, gamma)) if opts.metric == "h1" else (lambda g: g.copy())

    def inner(a, b):
        if opts.metric == "h1":
            return gamma * a.grid.tau * float(np.sum(a.derivative() * b.derivative()))
        return float(np.sum(a.values * b.values))

    F, g, _ = value_and_gradient(pd, p, l, spec)
    rep = OptimizeReport()
    s_trial = 1.0
    prev = None
    for it in range(opts.max_iter + 1):
        d = metric(g)
        gd = float(np.sum(g.values * d.values))
        gnorm = math.sqrt(max(gd, 0.0))
        rep.F.append(F)
        rep.grad_norm.append(gnorm)
        if gnorm <= opts.tol:
            rep.converged = True
            rep.message = "gradient tolerance reached"
            break
        if it == opts.max_iter:
            rep.message = "iteration cap reached"
            break
        if opts.bb_steps and prev is not None:
            dl = l - prev[0]
            dg = g - prev[1]
            curv = float(np.sum(dl.values * dg.values))
            if curv > 0:
                s_trial = inner(dl, dl) / curv
        s = s_trial
        accepted = False
        for _ in range(opts.max_halvings + 1):
            trial = l - d * s
            F_t, g_t, _ = value_and_gradient(pd, p, trial, spec)
            predicted = opts.c1 * s * gd
            if F_t <= F - predicted:
                accepted = True
                break
            if predicted <= 100 * EPS * abs(F) and F_t <= F:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            if predicted <= 100 * EPS * abs(F):
                rep.message = "objective rounding floor reached"
                break
            raise LineSearchFailed(f"Armijo backtracking exhausted at iteration {it} (grad norm {gnorm:.3e})")
        prev = (l, g)
        rep.step.append(s)
        l, F, g = trial, F_t, g_t
    rep.control = l
    log.info("optimize: %s after %d iterations, F=%.12g, |g|=%.3e",
             rep.message, rep.iterations, rep.F[-1], rep.grad_norm[-1])
    return rep


@dataclass
class RegSchedule:
    """Stages ``(lam_n, eps_n)`` with ``eps_n <= theta_n lam_n^2 exp(-T |Q| / lam_n)``."""

    lams: list
    epss: list
    thetas: list
    T: float
    q_norm: float

    def __post_init__(self):
        if not (len(self.lams) == len(self.epss) == len(self.thetas) >= 1):
            raise ValueError("schedule lists must be non-empty and of equal length")
        self.validate()

    @classmethod
    def default(cls, T, q_norm, n_stages=5, lam0=0.5):
        lams, epss, thetas = [], [], []
        for n in range(n_stages):
            lam = lam0 * 2.0**-n
            theta = 0.5 * 2.0**-n
            eps = theta * lam**2 * math.exp(-T * q_norm / lam)
            if eps < 1e-300:
                raise ValueError(f"stage {n}: eps underflows; reduce T*|Q| or the stage count")
            lams.append(lam)
            epss.append(eps)
            thetas.append(theta)
        return cls(lams, epss, thetas, T, q_norm)

    def coupling_ratio(self, n):
        """``eps_n lam_n^-2 exp(T |Q| / lam_n)``, evaluated in log space."""
        lam, eps = self.lams[n], self.epss[n]
        return math.exp(math.log(eps) - 2 * math.log(lam) + self.T * self.q_norm / lam)

    def validate(self):
        for n, (lam, eps, theta) in enumerate(zip(self.lams, self.epss, self.thetas)):
            RegParams(lam, eps)
            if not 0 < theta <= 1:
                raise ValueError(f"stage {n}: theta must lie in (0, 1]")
            if self.coupling_ratio(n) > theta * (1 + 1e-12):
                raise ValueError(f"stage {n}: eps too large for the lambda coupling")
        if any(b >= a for a, b in zip(self.lams, self.lams[1:])):
            raise ValueError("lambda must decrease strictly")
        if any(b >= a for a, b in zip(self.thetas, self.thetas[1:])):
            raise ValueError("theta must decrease strictly")

    def params(self):
        return [RegParams(lam, eps) for lam, eps in zip(self.lams, self.epss)]

    def __len__(self):
        return len(self.lams)


@dataclass
class ContinuationResult:
    reports: list
    distances: list  # H^1 distance between consecutive stage minimizers
    values: list

    @property
    def value_gaps(self):
        return [abs(b - a) for a, b in zip(self.values, self.values[1:])]


def continuation(pd, schedule, l_init, spec, opts=None):
    """Optimize at each stage, warm-starting from the previous minimizer."""
    reports, dists, values = [], [], []
    l = l_init
    for n, p in enumerate(schedule.params()):
        rep = optimize(pd, p, l, spec, opts)
        if reports:
            dists.append(h1norm(rep.control - l))
        reports.append(rep)
        values.append(rep.final_value)
        l = rep.control
        log.info("continuation stage %d: lam=%.4g eps=%.3g F=%.12g", n, p.lam, p.eps, rep.final_value)
    return ContinuationResult(reports, dists, values)


def random_directions(grid, p, n_dirs, seed=0):
    """Random controls with ``h(0) = 0`` normalized to unit discrete H^1 norm."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_dirs):
        v = rng.standard_normal((grid.N + 1, p))
        v[0] = 0.0
        h = Trajectory(grid, v)
        out.append(h * (1.0 / h1norm(h)))
    return out


def h1_pencil_min_ratio(grid):
    """``min_h |h|_{H^1}^2 / ||h||_{H^1}^2`` over grid controls with ``h(0) = 0``."""
    N, tau = grid.N, grid.tau
    sub, diag, _ = _bvp_bands(N, tau)
    K = np.diag(diag) + np.diag(sub, 1) + np.diag(sub, -1)
    mass = np.full(N, tau)
    mass[-1] = 0.5 * tau
    return float(scipy.linalg.eigh(K, np.diag(mass) + K, eigvals_only=True)[0])


@dataclass
class SSCResult:
    min_quotient: float
    passed: bool
    quotients: list
    n_dirs: int


def ssc_verify(pd, p, l, spec, n_dirs=20, delta_target=0.0, seed=0):
    """Sampled Rayleigh quotients ``F''(l)h^2 / ||h||_{H^1}^2``.

    A diagnostic, not a certificate: the minimum is taken over ``n_dirs``
    random directions only.
    """
    hess = HessianForm(pd, p, l, spec)
    quotients = []
    for h in random_directions(l.grid, l.space_dim, n_dirs, seed):
        quotients.append(hess(h) / h1norm(h) ** 2)
    mq = float(min(quotients))
    return SSCResult(mq, mq >= delta_target, quotients, n_dirs)


def growth_check(pd, p, l, spec, delta, n_dirs=5, seed=1, t_start=1.0, refine=12, n_checks=5,
                 max_doublings=10):
    """Local quadratic growth ``F(l + t h) >= F(l) + delta/4 t^2 ||h||^2``.

    For each direction the largest ``t0`` where the inequality holds is
    bracketed by doubling/halving from ``t_start`` and refined by bisection
    (``t0`` is capped at ``t_start * 2**max_doublings``).  The inequality is
    then re-checked at ``t0 / 2**j`` for ``j < n_checks``.  Returns
    ``(t0_list, ok)``.
    """
    F0 = evaluate_objective(pd, p, l, spec)

    def holds(h, t):
        return evaluate_objective(pd, p, l + h * t, spec) - F0 >= 0.25 * delta * t * t * h1norm(h) ** 2

    t0s, ok = [], True
    for h in random_directions(l.grid, l.space_dim, n_dirs, seed):
        lo, hi = None, None
        t = t_start
        if holds(h, t):
            lo = t
            for _ in range(max_doublings):
                if not holds(h, 2 * lo):
                    hi = 2 * lo
                    break
                lo *= 2
        else:
            hi = t
            while hi > 1e-8:
                if holds(h, 0.5 * hi):
                    lo = 0.5 * hi
                    break
                hi *= 0.5
        if lo is not None and hi is not None:
            for _ in range(refine):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if holds(h, mid) else (lo, mid)
        t0 = 0.0 if lo is None else lo
        t0s.append(t0)
        ok = ok and t0 > 0 and all(holds(h, t0 * 0.5**j) for j in range(n_checks))
    return t0s, ok
