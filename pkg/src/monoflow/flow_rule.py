"""Maximal monotone flow rules and their regularizations.

Every rule ``A`` exposes its resolvent ``(I + lam A)^{-1}``, the Yosida map
``A_lam = (I - R_lam) / lam`` with a generalized (Clarke) Jacobian for
semismooth Newton, the minimal section ``A^0``, and a twice continuously
differentiable surrogate ``A_s`` with exact first and second derivatives.

Three rules are provided:

* :class:`VonMises` -- subdifferential of the indicator of
  ``K = {tau : |dev(tau)| <= sigma0}`` applied per material point, with
  symmetric ``d x d`` blocks flattened row-major into the state vector.
  Its surrogate is ``(1/lam) max_eps(1 - sigma0/|tau^D|) tau^D``.
* :class:`Box` -- subdifferential of the indicator of ``[lo, hi]``
  (componentwise), smoothed by applying ``max_eps`` to each one-sided
  violation.
* :class:`Linear` -- ``A h = kappa h``.  It is already smooth, so its
  surrogate is the operator itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricBlock, DimensionMismatch, OutsideDomain

__all__ = [
    "RegParams",
    "smoothed_max",
    "smoothed_max_d1",
    "smoothed_max_d2",
    "deviator",
    "FlowRule",
    "VonMises",
    "Box",
    "Linear",
    "resolvent",
    "yosida",
    "minimal_section",
    "smoothed_eval",
    "smoothed_jvp",
    "smoothed_hvp",
    "random_symmetric_blocks",
]

DOMAIN_TOL = 1e-10
SYM_TOL = 1e-12


@dataclass(frozen=True)
class RegParams:
    """Yosida parameter ``lam > 0`` and smoothing width ``0 < eps <= 1/2``."""

    lam: float
    eps: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not (np.isfinite(self.eps) and 0 < self.eps <= 0.5):
            raise ValueError(f"eps must lie in (0, 1/2], got {self.eps}")


# The cubic branch is written in the scaled variable s = r/eps so that very
# small eps (continuation schedules reach 1e-40 and below) cannot overflow.

def smoothed_max(r, eps):
    """C^2 surrogate of ``max(0, r)``, exact for ``|r| >= eps``."""
    r = np.asarray(r, dtype=float)
    s = np.clip(r / eps, -1.0, 1.0)
    inner = eps * (s + 1.0) ** 3 * (3.0 - s) / 16.0
    return np.where(np.abs(r) >= eps, np.maximum(r, 0.0), inner)


def smoothed_max_d1(r, eps):
    r = np.asarray(r, dtype=float)
    s = np.clip(r / eps, -1.0, 1.0)
    inner = (s + 1.0) ** 2 * (2.0 - s) / 4.0
    return np.where(np.abs(r) >= eps, (r > 0).astype(float), inner)


def smoothed_max_d2(r, eps):
    r = np.asarray(r, dtype=float)
    s = np.clip(r / eps, -1.0, 1.0)
    inner = 3.0 * (1.0 - s * s) / (4.0 * eps)
    return np.where(np.abs(r) >= eps, 0.0, inner)


def deviator(blocks):
    """Traceless part of a stack of square matrices, shape ``(..., d, d)``."""
    blocks = np.asarray(blocks, dtype=float)
    d = blocks.shape[-1]
    tr = np.trace(blocks, axis1=-2, axis2=-1)
    return blocks - (tr / d)[..., None, None] * np.eye(d)


def random_symmetric_blocks(rng, n_pts, d, scale=1.0):
    """Flattened stack of random symmetric ``d x d`` blocks."""
    a = rng.standard_normal((n_pts, d, d))
    return (scale * 0.5 * (a + np.swapaxes(a, -1, -2))).reshape(-1)


class FlowRule:
    """Common interface; subclasses implement the operator-specific maps."""

    dim: int | None = None

    def _check(self, h):
        h = np.asarray(h, dtype=float)
        if self.dim is not None and h.shape != (self.dim,):
            raise DimensionMismatch(f"{type(self).__name__} acts on R^{self.dim}, got shape {h.shape}")
        return h

    # Unregularized operator.
    def resolvent(self, h, lam):
        raise NotImplementedError

    def resolvent_jacobian(self, h, lam):
        """Element of the generalized Jacobian of the resolvent at ``h``."""
        h = self._check(h)
        return np.eye(h.size) - lam * self.yosida_jacobian(h, lam)

    def yosida(self, h, lam):
        h = self._check(h)
        return (h - self.resolvent(h, lam)) / lam

    def yosida_jacobian(self, h, lam):
        raise NotImplementedError

    def domain_distance(self, h):
        return 0.0

    def minimal_section(self, h):
        raise NotImplementedError

    # Smooth surrogate A_s.
    def smoothed(self, h, p):
        raise NotImplementedError

    def smoothed_jacobian(self, h, p):
        raise NotImplementedError

    def smoothed_jvp(self, h, v, p):
        return self.smoothed_jacobian(h, p) @ np.asarray(v, dtype=float)

    def smoothed_hvp(self, h, v1, v2, p):
        raise NotImplementedError


@dataclass(frozen=True)
class VonMises(FlowRule):
    """``A = dI_K`` with ``K = {|tau^D| <= sigma0}`` at each material point."""

    sigma0: float
    d: int = 3
    n_pts: int = 1

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("yield stress sigma0 must be positive")
        if self.d < 1 or self.n_pts < 1:
            raise ValueError("d and n_pts must be positive")

    @property
    def dim(self):
        return self.n_pts * self.d * self.d

    def blocks(self, h):
        """Reshape to ``(n_pts, d, d)`` and enforce block symmetry."""
        h = self._check(h)
        b = h.reshape(self.n_pts, self.d, self.d)
        asym = float(np.max(np.abs(b - np.swapaxes(b, -1, -2))))
        if asym > SYM_TOL * max(1.0, float(np.max(np.abs(b)))):
            raise AsymmetricBlock(f"stress blocks are not symmetric (max asymmetry {asym:.3e})")
        return b

    def _dev_norm(self, h):
        dev = deviator(self.blocks(h))
        r = np.sqrt(np.einsum("kij,kij->k", dev, dev))
        return dev, r

    def _dev_projector(self):
        d = self.d
        e = np.eye(d).reshape(-1)
        return np.eye(d * d) - np.outer(e, e) / d

    def _assemble(self, c_outer, c_dev, dev, lam):
        """Block diagonal ``(1/lam)[c_outer t t^T + c_dev Dev]`` per point."""
        dd = self.d * self.d
        P = self._dev_projector()
        out = np.zeros((self.dim, self.dim))
        t = dev.reshape(self.n_pts, dd)
        for k in range(self.n_pts):
            sl = slice(k * dd, (k + 1) * dd)
            out[sl, sl] = (c_outer[k] * np.outer(t[k], t[k]) + c_dev[k] * P) / lam
        return out

    def _yield_factor(self, r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, 1.0 - self.sigma0 / safe, -np.inf), safe

    def resolvent(self, h, lam):
        # projection onto K; independent of lam
        dev, r = self._dev_norm(h)
        arg, _ = self._yield_factor(r)
        return self._check(h) - (np.maximum(arg, 0.0)[:, None, None] * dev).reshape(-1)

    def yosida(self, h, lam):
        dev, r = self._dev_norm(h)
        arg, _ = self._yield_factor(r)
        factor = np.maximum(arg, 0.0)
        return (factor[:, None, None] * dev).reshape(-1) / lam

    def yosida_jacobian(self, h, lam):
        dev, r = self._dev_norm(h)
        active = r > self.sigma0
        safe = np.where(active, r, 1.0)
        c_outer = np.where(active, self.sigma0 / safe**3, 0.0)
        c_dev = np.where(active, 1.0 - self.sigma0 / safe, 0.0)
        return self._assemble(c_outer, c_dev, dev, lam)

    def domain_distance(self, h):
        _, r = self._dev_norm(h)
        return float(np.linalg.norm(np.maximum(r - self.sigma0, 0.0)))

    def minimal_section(self, h):
        dist = self.domain_distance(h)
        if dist > DOMAIN_TOL:
            raise OutsideDomain(f"point lies outside the yield set (distance {dist:.3e})", dist)
        return np.zeros(self.dim)

    def smoothed(self, h, p):
        dev, r = self._dev_norm(h)
        arg, _ = self._yield_factor(r)
        m = np.where(r > 0, smoothed_max(np.where(r > 0, arg, -1.0), p.eps), 0.0)
        return (m[:, None, None] * dev).reshape(-1) / p.lam

    def _smoothed_coeffs(self, r, p):
        arg, safe = self._yield_factor(r)
        arg = np.where(r > 0, arg, -1.0)
        m = np.where(r > 0, smoothed_max(arg, p.eps), 0.0)
        m1 = np.where(r > 0, smoothed_max_d1(arg, p.eps), 0.0)
        m2 = np.where(r > 0, smoothed_max_d2(arg, p.eps), 0.0)
        return m, m1, m2, safe

    def smoothed_jacobian(self, h, p):
        dev, r = self._dev_norm(h)
        m, m1, _, safe = self._smoothed_coeffs(r, p)
        c_outer = m1 * self.sigma0 / safe**3
        return self._assemble(c_outer, m, dev, p.lam)

    def smoothed_jvp(self, h, v, p):
        dev, r = self._dev_norm(h)
        hd = deviator(self.blocks(v))
        m, m1, _, safe = self._smoothed_coeffs(r, p)
        inner = np.einsum("kij,kij->k", dev, hd)
        c = m1 * self.sigma0 / safe**3 * inner
        return (c[:, None, None] * dev + m[:, None, None] * hd).reshape(-1) / p.lam

    def smoothed_hvp(self, h, v1, v2, p):
        dev, r = self._dev_norm(h)
        h1 = deviator(self.blocks(v1))
        h2 = deviator(self.blocks(v2))
        _, m1, m2, safe = self._smoothed_coeffs(r, p)
        s0 = self.sigma0
        a1 = np.einsum("kij,kij->k", dev, h1)
        a2 = np.einsum("kij,kij->k", dev, h2)
        a12 = np.einsum("kij,kij->k", h1, h2)
        pre = s0 / (p.lam * safe**3)
        # products and sums kept commutative so swapping h1, h2 is bit-exact
        prod = a1 * a2
        c_dev = pre * (m2 * s0 / safe**3 * prod + m1 * (-3.0 / safe**2 * prod + a12))
        mixed = (pre * m1 * a1)[:, None, None] * h2 + (pre * m1 * a2)[:, None, None] * h1
        return (c_dev[:, None, None] * dev + mixed).reshape(-1)


@dataclass(frozen=True, eq=False)
class Box(FlowRule):
    """``A = dI_[lo, hi]`` componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi must have the same shape")
        if np.any(lo > hi):
            raise ValueError("Box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def resolvent(self, h, lam):
        return np.clip(self._check(h), self.lo, self.hi)

    def yosida_jacobian(self, h, lam):
        h = self._check(h)
        outside = (h > self.hi) | (h < self.lo)
        return np.diag(outside.astype(float) / lam)

    def domain_distance(self, h):
        h = self._check(h)
        return float(np.linalg.norm(h - np.clip(h, self.lo, self.hi)))

    def minimal_section(self, h):
        dist = self.domain_distance(h)
        if dist > DOMAIN_TOL:
            raise OutsideDomain(f"point lies outside the box (distance {dist:.3e})", dist)
        return np.zeros(self.dim)

    def smoothed(self, h, p):
        h = self._check(h)
        return (smoothed_max(h - self.hi, p.eps) - smoothed_max(self.lo - h, p.eps)) / p.lam

    def smoothed_jacobian(self, h, p):
        h = self._check(h)
        return np.diag((smoothed_max_d1(h - self.hi, p.eps) + smoothed_max_d1(self.lo - h, p.eps)) / p.lam)

    def smoothed_hvp(self, h, v1, v2, p):
        h = self._check(h)
        c = (smoothed_max_d2(h - self.hi, p.eps) - smoothed_max_d2(self.lo - h, p.eps)) / p.lam
        return c * np.asarray(v1, dtype=float) * np.asarray(v2, dtype=float)


@dataclass(frozen=True)
class Linear(FlowRule):
    """``A h = kappa h`` on a space of any dimension."""

    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")

    def resolvent(self, h, lam):
        return self._check(h) / (1.0 + lam * self.kappa)

    def yosida_jacobian(self, h, lam):
        n = np.asarray(h).size
        return np.eye(n) * self.kappa / (1.0 + lam * self.kappa)

    def minimal_section(self, h):
        return self.kappa * self._check(h)

    def smoothed(self, h, p):
        return self.kappa * self._check(h)

    def smoothed_jacobian(self, h, p):
        return self.kappa * np.eye(np.asarray(h).size)

    def smoothed_hvp(self, h, v1, v2, p):
        return np.zeros(np.asarray(h).size)


def resolvent(rule, h, lam):
    if not lam > 0:
        raise ValueError("lam must be positive")
    return rule.resolvent(h, lam)


def yosida(rule, h, lam):
    if not lam > 0:
        raise ValueError("lam must be positive")
    return rule.yosida(h, lam)


def minimal_section(rule, h):
    return rule.minimal_section(h)


def smoothed_eval(rule, tau, p):
    return rule.smoothed(tau, p)


def smoothed_jvp(rule, tau, h, p):
    return rule.smoothed_jvp(tau, h, p)


def smoothed_hvp(rule, tau, h1, h2, p):
    return rule.smoothed_hvp(tau, h1, h2, p)
