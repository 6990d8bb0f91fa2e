"""Horizontal/vertical splitting for Finsler submersions onto coordinate bases.

A vector ``v`` is horizontal when it is ``g_v``-orthogonal to the fibre, i.e.
its Legendre covector annihilates ``ker d rho``.  Unlike the Riemannian case,
the horizontal vectors at a point form a cone rather than a subspace.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError, PreconditionError
from .geodesic import PhaseState, Trajectory, integrate_geodesic
from .minkowski import _fundamental, _legendre, _norm
from .scene import Scene


def _require_submersion(scene):
    if scene.submersion is None:
        raise PreconditionError(f"scene {scene.name!r} has no submersion")
    return scene.submersion


def vertical_basis(scene: Scene, x=None) -> np.ndarray:
    """Rows spanning ``ker d rho`` at ``x`` (constant for coordinate projections)."""
    return _require_submersion(scene).vertical_basis(scene.dim)


def is_horizontal(scene: Scene, s: PhaseState, tol: float = 1e-10) -> bool:
    """``max_e |g_v(v, e)| <= tol F(v)^2`` over the vertical basis."""
    if not isinstance(s, PhaseState):
        s = PhaseState(*s)
    basis = vertical_basis(scene)
    h, w = scene.fields(s.x)
    p = _legendre(h, w, s.v)
    F = _norm(h, w, s.v)
    return bool(np.max(np.abs(basis @ p), initial=0.0) <= tol * F * F)


def base_norm(scene: Scene, x, b) -> float:
    """Norm ``F*(b)`` of a base vector at ``rho(x)``."""
    sub = _require_submersion(scene)
    y = sub.project(x)
    return float(_norm(sub.base_h(y), sub.base_w(y), np.asarray(b, dtype=float)))


def horizontal_lift_vector(scene: Scene, x, b, tol=1e-13, max_iter=100) -> np.ndarray:
    """The horizontal vector over ``b``.

    Writes ``v = (b, z)`` and solves the vertical Legendre components
    ``p_V(b, z) = 0`` by damped Newton, the Jacobian being the vertical block of
    ``g_v``.  The start is the ``h``-orthogonal lift.  A final rescaling makes
    ``F(v) = F*(b)`` exact.
    """
    sub = _require_submersion(scene)
    x = np.asarray(x, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    k, n = sub.base_dim, scene.dim
    if b.size != k:
        raise DomainError(f"base vector must have {k} components")
    if not np.any(b):
        raise DomainError("cannot lift the zero vector")
    h, w = scene.fields(x)
    # h-orthogonal lift: vertical part solves h_VV z = -h_VH b
    z = -np.linalg.solve(h[k:, k:], h[k:, :k] @ b) if n > k else np.zeros(0)
    scale = float(np.linalg.norm(b))
    res = np.inf
    for _ in range(max_iter):
        v = np.concatenate([b, z])
        p = _legendre(h, w, v)
        res = float(np.max(np.abs(p[k:]), initial=0.0))
        if res <= tol * scale:
            break
        g = _fundamental(h, w, v)
        dz = -np.linalg.solve(g[k:, k:], p[k:])
        # backtrack on the residual norm
        lam = 1.0
        while lam > 1e-6:
            trial = np.concatenate([b, z + lam * dz])
            if np.max(np.abs(_legendre(h, w, trial)[k:])) < res:
                break
            lam *= 0.5
        z = z + lam * dz
    else:
        raise NumericError(f"horizontal lift did not converge (residual {res:.3g})")
    v = np.concatenate([b, z])
    target = base_norm(scene, x, b)
    return v * (target / float(_norm(h, w, v)))


def horizontal_lift_geodesic(scene: Scene, x0, base_traj: Trajectory, tol=1e-5) -> Trajectory:
    """Horizontal lift through ``x0`` of a base geodesic.

    The initial base velocity is lifted, the total-space geodesic integrated
    on the same time grid, and ``rho(gamma(t))`` is required to follow the base
    curve within ``tol``.
    """
    sub = _require_submersion(scene)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if np.max(np.abs(sub.project(x0) - base_traj.x[0])) > tol:
        raise DomainError("x0 does not lie over the start of the base curve")
    times = base_traj.times
    step = float(np.max(np.abs(np.diff(times))))
    v0 = horizontal_lift_vector(scene, x0, base_traj.v[0])
    traj = integrate_geodesic(scene, PhaseState(x0, v0), float(times[-1] - times[0]), step)
    m = min(len(traj), len(base_traj))
    dev = float(np.max(np.abs(sub.project(traj.x[:m]) - base_traj.x[:m])))
    if len(traj) != len(base_traj) or dev > tol:
        raise NumericError(f"lift does not track the base curve (deviation {dev:.3g})")
    return traj


def _sphere_directions(dim, samples):
    """Angle grid on the unit sphere of ``R^dim`` (``samples`` points per angle)."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    if dim == 2:
        return np.column_stack([np.cos(th), np.sin(th)])
    if dim == 3:
        ph = (np.arange(samples // 2) + 0.5) * np.pi / (samples // 2)
        T, P = np.meshgrid(th, ph)
        return np.column_stack([(np.sin(P) * np.cos(T)).ravel(), (np.sin(P) * np.sin(T)).ravel(), np.cos(P).ravel()])
    raise DomainError("indicatrix sampling is implemented for dimensions up to 3")


def submersion_ball_check(scene: Scene, x, samples: int = 256) -> float:
    """Deviation between ``d rho`` of the unit ball at ``x`` and the base unit ball.

    Both indicatrices are sampled on angle grids (reference directions scaled
    onto ``F = 1``).  Since both balls are convex, their Hausdorff distance is
    the largest difference of support functions; it is evaluated over the base
    angle grid.
    """
    if samples < 16:
        raise DomainError("need at least 16 samples")
    sub = _require_submersion(scene)
    x = np.asarray(x, dtype=float).reshape(-1)
    n, k = scene.dim, sub.base_dim
    h, w = scene.fields(x)
    U = _sphere_directions(n, samples)
    ind = U / _norm(h, w, U)[:, None]
    proj = sub.dproject(ind)
    y = sub.project(x)
    hb, wb = sub.base_h(y), sub.base_w(y)
    Ub = _sphere_directions(k, samples)
    base_ind = Ub / _norm(hb, wb, Ub)[:, None]
    support_proj = np.max(Ub @ proj.T, axis=1)
    support_base = np.max(Ub @ base_ind.T, axis=1)
    return float(np.max(np.abs(support_proj - support_base)))
