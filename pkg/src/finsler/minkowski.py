"""Pointwise Randers norms built from Zermelo data.

A Randers norm on a tangent space is determined by an inner product ``h`` and
a wind vector ``w`` with ``h(w, w) < 1``.  The norm ``F(v)`` of a vector is the
unique non-negative solution of

    || v - F(v) w ||_h = F(v),

i.e. the time needed to reach ``v`` when moving at unit speed relative to a
medium that drifts with velocity ``w``.

All quantities here are evaluated analytically.  Every analytic routine has a
finite-difference or fixed-point twin (suffix ``_fd`` / ``_fixed_point``) that
only uses the defining formulas; the test-suite uses the twins as oracles.

The private helpers prefixed with an underscore accept arrays with arbitrary
leading batch dimensions (``h`` of shape ``(..., n, n)``, ``w`` and ``v`` of
shape ``(..., n)``); the geodesic integrator relies on them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: winds with ``h(w, w) > WIND_LIMIT`` are rejected at construction
WIND_LIMIT = 1.0 - 1e-8


def _quad(h, a, b):
    return np.einsum("...i,...ij,...j->...", a, h, b)


@dataclass(frozen=True, eq=False)
class RandersDatum:
    """Zermelo data ``(h, w)`` of a Randers norm on one tangent space.

    Parameters
    ----------
    h : (n, n) array_like
        Symmetric positive-definite matrix.
    w : (n,) array_like
        Wind vector with ``h(w, w) < 1``.
    """

    h: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        w = np.array(self.w, dtype=float).reshape(-1)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] != w.size:
            raise DomainError(f"incompatible shapes h{h.shape}, w{w.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(w))):
            raise DomainError("non-finite Zermelo data")
        if np.max(np.abs(h - h.T)) > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise DomainError("h is not symmetric")
        h = 0.5 * (h + h.T)
        if np.min(np.linalg.eigvalsh(h)) <= 0.0:
            raise DomainError("h is not positive definite")
        ww = float(w @ h @ w)
        if ww > WIND_LIMIT:
            raise DomainError(f"wind too strong: h(w,w) = {ww!r} (must be < 1)")
        h.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "w", w)

    @property
    def dim(self):
        return self.w.size

    @property
    def wind_norm(self):
        """``||w||_h``."""
        return float(np.sqrt(self.w @ self.h @ self.w))


def _as_vector(datum, v):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != datum.dim:
        raise DomainError(f"vector of size {v.size} in a {datum.dim}-dimensional space")
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite tangent vector")
    return v


def _nonzero(v):
    if not np.any(v):
        raise DomainError("the zero vector is outside TM \\ {0}")


# --- batched analytic kernels -------------------------------------------------

def _alpha_beta(h, w):
    """Riemannian part ``A`` and one-form ``b`` with ``F(v) = sqrt(v.A.v) + b.v``."""
    hw = np.einsum("...ij,...j->...i", h, w)
    lam = 1.0 - np.einsum("...i,...i->...", w, hw)
    A = (lam[..., None, None] * h + hw[..., :, None] * hw[..., None, :]) / (lam**2)[..., None, None]
    b = -hw / lam[..., None]
    return A, b


def _norm(h, w, v):
    hw = np.einsum("...ij,...j->...i", h, w)
    lam = 1.0 - np.einsum("...i,...i->...", w, hw)
    hvw = np.einsum("...i,...i->...", v, hw)
    hvv = _quad(h, v, v)
    disc = np.sqrt(np.maximum(hvw * hvw + lam * hvv, 0.0))
    # the two forms are algebraically equal; pick the one free of cancellation
    return np.where(hvw <= 0.0, (disc - hvw) / lam, hvv / np.where(disc + hvw > 0, disc + hvw, 1.0))


def _first_order(h, w, v):
    """Return ``F``, the gradient ``dF/dv`` and the pieces needed for ``g_v``."""
    A, b = _alpha_beta(h, w)
    Av = np.einsum("...ij,...j->...i", A, v)
    alpha = np.sqrt(np.einsum("...i,...i->...", v, Av))
    F = alpha + np.einsum("...i,...i->...", b, v)
    ell = Av / alpha[..., None] + b
    return F, ell, A, Av, alpha


def _lagrangian(h, w, v):
    """``L = F^2 / 2``."""
    F = _norm(h, w, v)
    return 0.5 * F * F


def _legendre(h, w, v):
    F, ell, *_ = _first_order(h, w, v)
    return F[..., None] * ell


def _fundamental(h, w, v):
    F, ell, A, Av, alpha = _first_order(h, w, v)
    a = alpha[..., None, None]
    hess_F = A / a - Av[..., :, None] * Av[..., None, :] / a**3
    g = ell[..., :, None] * ell[..., None, :] + F[..., None, None] * hess_F
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def _cartan_array(h, w, v):
    """Fully symmetric array ``C_ijk`` (one quarter of the third derivative of F^2)."""
    F, ell, A, Av, alpha = _first_order(h, w, v)
    hess_F = A / alpha - np.outer(Av, Av) / alpha**3
    third_F = (
        -(np.einsum("ij,k->ijk", A, Av) + np.einsum("ik,j->ijk", A, Av) + np.einsum("jk,i->ijk", A, Av))
        / alpha**3
        + 3.0 * np.einsum("i,j,k->ijk", Av, Av, Av) / alpha**5
    )
    dg = (
        np.einsum("ik,j->ijk", hess_F, ell)
        + np.einsum("jk,i->ijk", hess_F, ell)
        + np.einsum("ij,k->ijk", hess_F, ell)
        + F * third_F
    )
    return 0.5 * dg


# --- public operations ----------------------------------------------------------

def randers_norm(datum: RandersDatum, v) -> float:
    """Randers norm ``F(v)`` from the positive root of the intrinsic quadratic.

    ``F^2 (1 - h(w,w)) + 2 F h(v,w) - h(v,v) = 0``; ``F(0) = 0``.

    Examples
    --------
    >>> d = RandersDatum(np.eye(2), [0.0, 0.5])
    >>> round(randers_norm(d, [0.0, 1.0]), 12), round(randers_norm(d, [0.0, -1.0]), 12)
    (0.666666666667, 2.0)
    """
    v = _as_vector(datum, v)
    return float(_norm(datum.h, datum.w, v))


def randers_norm_fixed_point(datum: RandersDatum, v, tol=1e-15, max_iter=10_000) -> float:
    """Solve ``||v - F w||_h = F`` by fixed-point iteration.

    The map ``F -> ||v - F w||_h`` is a contraction with constant ``||w||_h``;
    used as an independent check of :func:`randers_norm`.
    """
    v = _as_vector(datum, v)
    F = float(np.sqrt(v @ datum.h @ v))
    for _ in range(max_iter):
        r = v - F * datum.w
        F_new = float(np.sqrt(r @ datum.h @ r))
        if abs(F_new - F) <= tol * max(1.0, F_new):
            return F_new
        F = F_new
    return F


def _norm_ld(datum, u):
    # extended precision keeps the difference stencils of the oracles out of roundoff
    ld = np.longdouble
    return _norm(datum.h.astype(ld), datum.w.astype(ld), np.asarray(u, dtype=ld))


def fundamental_tensor(datum: RandersDatum, v) -> np.ndarray:
    """Fundamental tensor ``g_v``, the Hessian of ``F^2 / 2`` at ``v != 0``."""
    v = _as_vector(datum, v)
    _nonzero(v)
    return _fundamental(datum.h, datum.w, v)


def fundamental_tensor_fd(datum: RandersDatum, v, step=1e-4) -> np.ndarray:
    """Central finite-difference Hessian of ``F^2 / 2`` (oracle)."""
    v = _as_vector(datum, v)
    _nonzero(v)
    n = v.size
    scale = max(1.0, float(np.linalg.norm(v)))
    v = v.astype(np.longdouble)
    e = np.longdouble(step * scale) * np.eye(n, dtype=np.longdouble)
    E = lambda u: 0.5 * _norm_ld(datum, u) ** 2  # noqa: E731
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            val = (
                E(v + e[i] + e[j]) - E(v + e[i] - e[j]) - E(v - e[i] + e[j]) + E(v - e[i] - e[j])
            ) / (4.0 * (step * scale) ** 2)
            g[i, j] = g[j, i] = float(val)
    return g


def cartan_tensor(datum: RandersDatum, v, w1, w2, w3) -> float:
    """Cartan tensor ``C_v(w1, w2, w3)``, a quarter of the third derivative of ``F^2``."""
    v = _as_vector(datum, v)
    _nonzero(v)
    C = _cartan_array(datum.h, datum.w, v)
    return float(np.einsum("ijk,i,j,k->", C, _as_vector(datum, w1), _as_vector(datum, w2), _as_vector(datum, w3)))


def cartan_tensor_fd(datum: RandersDatum, v, w1, w2, w3, step=1e-3) -> float:
    """Mixed third derivative of ``F^2 / 4`` by central differences with one
    Richardson extrapolation step (oracle)."""
    v = _as_vector(datum, v)
    _nonzero(v)
    ld = np.longdouble
    v = v.astype(ld)
    w1, w2, w3 = (_as_vector(datum, u).astype(ld) for u in (w1, w2, w3))
    f = lambda u: _norm_ld(datum, u) ** 2  # noqa: E731

    def stencil(s):
        acc = 0.0
        for a in (1, -1):
            for b in (1, -1):
                for c in (1, -1):
                    acc += a * b * c * f(v + s * (a * w1 + b * w2 + c * w3))
        return acc / (8.0 * s**3) / 4.0

    step = ld(step)
    return float((4 * stencil(step / 2) - stencil(step)) / 3)


def legendre(datum: RandersDatum, v) -> np.ndarray:
    """Legendre map ``v -> g_v(v, .)`` as a covector of momenta."""
    v = _as_vector(datum, v)
    _nonzero(v)
    return _legendre(datum.h, datum.w, v)
