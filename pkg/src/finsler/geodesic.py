"""Finsler geodesics, curvature diagnostics and a Liouville volume check.

Geodesics are the Euler-Lagrange curves of the energy ``L(x, v) = F(x, v)^2 / 2``.
Solving the Euler-Lagrange system for the acceleration gives

    g_v a = dL/dx - (d^2 L / dv dx) v,

with the fundamental tensor ``g_v`` as mass matrix.  Velocity derivatives are
analytic (see :mod:`finsler.minkowski`), position derivatives are central
differences with step :data:`FD_X`.

All kernels act on batches of states so that many initial conditions can be
advanced in one RK4 loop.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, PreconditionError
from .minkowski import _first_order, _fundamental
from .scene import Scene, wrap

FD_X = 1e-5
COND_LIMIT = 1e10


@dataclass(frozen=True)
class PhaseState:
    """A point of ``TM \\ {0}`` in chart coordinates."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        v = np.array(self.v, dtype=float).reshape(-1)
        if x.shape != v.shape:
            raise DomainError("position and velocity sizes differ")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise DomainError("non-finite phase state")
        if not np.any(v):
            raise DomainError("zero velocity")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


@dataclass
class Trajectory:
    """Time-sampled curve ``t -> (x(t), v(t))``.

    Positions on torus scenes are kept in covering coordinates; use
    :meth:`wrapped` for points in the fundamental cell.
    """

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    scene: Scene = field(repr=False, default=None)
    truncated: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.x.shape != self.v.shape or self.x.shape[0] != self.times.size:
            raise DomainError("inconsistent trajectory shapes")
        d = np.diff(self.times)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("sample times must be strictly monotone")

    def __len__(self):
        return self.times.size

    @property
    def end(self) -> PhaseState:
        return PhaseState(self.x[-1], self.v[-1])

    def wrapped(self):
        return wrap(self.scene, self.x) if self.scene is not None else self.x

    def speeds(self):
        """``F(gamma'(t))`` at every sample."""
        return self.scene.norm(self.x, self.v)

    @classmethod
    def from_curve(cls, scene, position, velocity, times):
        """Sample a closed-form curve; ``position``/``velocity`` map ``t`` arrays to ``(m, n)``."""
        times = np.asarray(times, dtype=float)
        return cls(times, position(times), velocity(times), scene)

    # CSV: t,x1..xn,v1..vn with 17 significant digits
    def to_csv(self, path):
        n = self.x.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for t, x, v in zip(self.times, self.x, self.v):
                wr.writerow([f"{t:.17g}"] + [f"{c:.17g}" for c in x] + [f"{c:.17g}" for c in v])

    @classmethod
    def from_csv(cls, path, scene=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        n = (len(header) - 1) // 2
        if header[0] != "t" or len(header) != 2 * n + 1:
            raise DomainError(f"not a trajectory CSV header: {header}")
        return cls(body[:, 0], body[:, 1 : n + 1], body[:, n + 1 :], scene)


# --- dynamics -----------------------------------------------------------------------

def _accel(scene: Scene, X, V, check=True):
    """Batched Euler-Lagrange acceleration for states ``X, V`` of shape ``(B, n)``."""
    if scene.constant:
        return np.zeros_like(V)
    n = scene.dim
    E = FD_X * np.eye(n)
    # centre, then +/- steps along each axis, evaluated in one pass
    P = np.concatenate([X[:, None, :], X[:, None, :] + E, X[:, None, :] - E], axis=1)
    Vb = np.broadcast_to(V[:, None, :], P.shape)
    h, w = scene.fields(P)
    F, ell, A, Av, alpha = _first_order(h, w, Vb)
    L = 0.5 * F * F
    p = F[..., None] * ell
    a0 = alpha[:, 0, None, None]
    hess_F = A[:, 0] / a0 - Av[:, 0, :, None] * Av[:, 0, None, :] / a0**3
    g = ell[:, 0, :, None] * ell[:, 0, None, :] + F[:, 0, None, None] * hess_F
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    if check:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite fundamental tensor along the flow")
        ev = np.linalg.eigvalsh(g)
        if not np.all(ev[:, 0] > 0) or np.any(ev[:, -1] > COND_LIMIT * ev[:, 0]):
            raise NumericError(f"fundamental tensor ill-conditioned (eigenvalues {ev.min():.3g}..{ev.max():.3g})")
    dLdx = (L[:, 1 : n + 1] - L[:, n + 1 :]) / (2 * FD_X)
    # dpdx[b, j, i] = d p_i / d x_j
    dpdx = (p[:, 1 : n + 1] - p[:, n + 1 :]) / (2 * FD_X)
    rhs = dLdx - np.einsum("bji,bj->bi", dpdx, V)
    return np.linalg.solve(g, rhs[..., None])[..., 0]


def geodesic_accel(scene: Scene, x, v) -> np.ndarray:
    """Acceleration ``a`` with ``x'' = a(x, x')`` along geodesics.

    Raises
    ------
    DomainError
        ``v = 0`` or ``x`` outside the chart.
    NumericError
        ``g_v`` has condition number above ``1e10``.
    """
    s = PhaseState(x, v)
    if not scene.in_domain(s.x):
        raise DomainError(f"{s.x.tolist()} is outside the chart of scene {scene.name!r}")
    return _accel(scene, s.x[None], s.v[None])[0]


def _time_grid(T, step):
    if step <= 0:
        raise DomainError("step must be positive")
    n = max(1, math.ceil(abs(T) / step - 1e-9))
    ts = np.arange(n + 1) * step * np.sign(T if T != 0 else 1.0)
    ts[-1] = T
    return ts


def _rk4(scene, X, V, times, check_domain=True):
    """Advance batches along ``times``; returns ``(X, V)`` stacks and the number of
    valid samples (fewer than ``len(times)`` when the chart is left)."""
    Xs = np.empty((times.size,) + X.shape)
    Vs = np.empty_like(Xs)
    Xs[0], Vs[0] = X, V
    # overflow shows up as non-finite states, which are reported below
    with np.errstate(over="ignore", invalid="ignore"):
        return _rk4_loop(scene, Xs, Vs, times, check_domain)


def _rk4_loop(scene, Xs, Vs, times, check_domain):
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        x, v = Xs[k], Vs[k]
        a1 = _accel(scene, x, v)
        x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
        a2 = _accel(scene, x2, v2)
        x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
        a3 = _accel(scene, x3, v3)
        x4, v4 = x + dt * v3, v + dt * a3
        a4 = _accel(scene, x4, v4)
        Xs[k + 1] = x + dt / 6 * (v + 2 * v2 + 2 * v3 + v4)
        Vs[k + 1] = v + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        if not (np.all(np.isfinite(Xs[k + 1])) and np.all(np.isfinite(Vs[k + 1]))):
            raise NumericError(f"geodesic integration blew up at t = {times[k + 1]:.6g}")
        if check_domain and scene.domain is not None and not np.all(scene.in_domain(Xs[k + 1])):
            return Xs, Vs, k + 1
    return Xs, Vs, times.size


def integrate_geodesic(scene: Scene, s0: PhaseState, T: float, step: float = 1e-3) -> Trajectory:
    """Classical RK4 on ``(x, v)`` over ``[0, T]`` (backward flow when ``T < 0``).

    Samples sit at multiples of ``step`` plus the final time ``T``.  When the
    curve leaves the chart the trajectory is cut at the last admissible sample
    and ``truncated`` is set.
    """
    if not isinstance(s0, PhaseState):
        s0 = PhaseState(*s0)
    if not scene.in_domain(s0.x):
        raise DomainError(f"{s0.x.tolist()} is outside the chart of scene {scene.name!r}")
    times = _time_grid(T, step)
    Xs, Vs, m = _rk4(scene, s0.x[None], s0.v[None], times)
    return Trajectory(times[:m], Xs[:m, 0], Vs[:m, 0], scene, truncated=m < times.size)


def _flow_batch(scene, X, V, T, step):
    """Endpoints of the geodesic flow for a batch of states; leaving the chart is an error."""
    times = _time_grid(T, step)
    Xs, Vs, m = _rk4(scene, X, V, times)
    if m < times.size:
        raise DomainError(f"geodesic left the chart of scene {scene.name!r} before t = {T}")
    return Xs[-1], Vs[-1]


def _wind_flow(scene, Y, S, step):
    """Flow each point ``Y[k]`` along the wind for its own time ``S[k]``."""
    if scene.constant:
        return Y + S[:, None] * scene.w_field(Y)
    if not np.any(scene.w_field(Y)):
        return Y.copy()  # zeros of the wind are fixed points of its flow
    N = max(1, math.ceil(np.max(np.abs(S)) / step - 1e-9))
    dt = (S / N)[:, None]
    y = Y.copy()
    for _ in range(N):
        k1 = scene.w_field(y)
        k2 = scene.w_field(y + 0.5 * dt * k1)
        k3 = scene.w_field(y + 0.5 * dt * k2)
        k4 = scene.w_field(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def zermelo_geodesic(scene: Scene, s0: PhaseState, T: float, step: float = 1e-3) -> Trajectory:
    """Geodesic for a Killing wind: the h-geodesic carried along by the wind flow.

    With ``gamma`` the unit ``h``-geodesic leaving ``x0`` with velocity
    ``v0/F(v0) - w(x0)``, the Randers geodesic is ``beta(s) = phi_s(gamma(s))``
    where ``phi`` is the flow of the wind.  The returned trajectory has the
    speed ``F(v0)`` of the initial state.
    """
    if not scene.killing:
        raise PreconditionError(f"the wind of scene {scene.name!r} is not a Killing field")
    if not isinstance(s0, PhaseState):
        s0 = PhaseState(*s0)
    c = float(scene.norm(s0.x, s0.v))
    u = s0.v / c - scene.w_field(s0.x)
    still = Scene(
        name=scene.name + ":still",
        dim=scene.dim,
        h_field=scene.h_field,
        w_field=lambda x: np.zeros(np.shape(x)),
        periods=scene.periods,
        constant=scene.constant,
        domain=scene.domain,
    )
    times = _time_grid(T, step)
    arc = c * times
    if scene.constant:
        gx = s0.x + arc[:, None] * u
        gv = np.broadcast_to(u, gx.shape)
    else:
        # the h-geodesic is sampled at the arc lengths of the output grid
        Xs, Vs, m = _rk4(still, s0.x[None], u[None], arc)
        if m < arc.size:
            raise DomainError("h-geodesic left the chart")
        gx, gv = Xs[:, 0], Vs[:, 0]
    bx = _wind_flow(scene, gx, arc, step)
    if scene.constant:
        dphi_gv = gv
    else:
        eps = 1e-6
        dphi_gv = (_wind_flow(scene, gx + eps * gv, arc, step) - _wind_flow(scene, gx - eps * gv, arc, step)) / (
            2 * eps
        )
    bv = c * (dphi_gv + scene.w_field(bx))
    return Trajectory(times, bx, bv, scene)


# --- curvature -------------------------------------------------------------------------

def _nonlinear_connection(scene, X, V, dv=1e-4):
    """``N = -1/2 da/dv`` for a batch; ``N[b, i, j] = dN^i / ...`` acting on column vectors."""
    n = scene.dim
    if scene.constant:
        return np.zeros(X.shape + (n,))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = dv
        cols.append((_accel(scene, X, V + e) - _accel(scene, X, V - e)) / (2 * dv))
    return -0.5 * np.stack(cols, axis=-1)


def _jacobi_data(scene, s, u, t, eps, dt, step):
    """Position, velocity, J, J', covariant J'' pieces at time ``t``."""
    if not isinstance(s, PhaseState):
        s = PhaseState(*s)
    u = np.asarray(u, dtype=float).reshape(-1)
    if not np.any(u):
        raise DomainError("u must be nonzero")
    X0 = np.stack([s.x, s.x + eps * u, s.x - eps * u])
    V0 = np.stack([s.v, s.v, s.v])
    if t != 0:
        Xt, Vt = _flow_batch(scene, X0, V0, t, step)
    else:
        Xt, Vt = X0, V0
    Xf, Vf = _flow_batch(scene, Xt[:1], Vt[:1], dt, dt)
    Xb, Vb = _flow_batch(scene, Xt[:1], Vt[:1], -dt, dt)
    J = (Xt[1] - Xt[2]) / (2 * eps)
    dJ = (Vt[1] - Vt[2]) / (2 * eps)
    acc = _accel(scene, Xt[1:], Vt[1:])
    ddJ = (acc[0] - acc[1]) / (2 * eps)
    N = _nonlinear_connection(scene, Xt[:1], Vt[:1])[0]
    Nf = _nonlinear_connection(scene, Xf, Vf)[0]
    Nb = _nonlinear_connection(scene, Xb, Vb)[0]
    dN = (Nf - Nb) / (2 * dt)
    D2J = ddJ + dN @ J + 2 * N @ dJ + N @ (N @ J)
    return Xt[0], Vt[0], J, -D2J


def estimate_jacobi_operator(scene: Scene, s: PhaseState, u, t: float = 0.0, eps=1e-4, dt=1e-3, step=1e-3):
    """Estimate ``R_{gamma'(t)}(J(t))`` for the Jacobi field of the variation
    through geodesics starting at ``x + s u`` with the same chart velocity.

    ``J`` and ``J'`` are central differences (half-width ``eps``) of the
    perturbed flows.  The chart second derivative ``J''`` comes from the
    difference of the accelerations of the perturbed geodesics, and the
    covariant second derivative is assembled with the nonlinear connection
    ``N = -1/2 da/dv`` of the spray, differentiated along the curve with step
    ``dt``.  Returns ``-D_t^2 J(t)``.
    """
    return _jacobi_data(scene, s, u, t, eps, dt, step)[3]


def flag_curvature(scene: Scene, s: PhaseState, u, t: float = 0.0, **kw) -> float:
    """Flag curvature ``K(gamma'(t), J(t))``.

    ``K = g_v(R_v J, J) / (g_v(v, v) g_v(J, J) - g_v(v, J)^2)`` with
    ``v = gamma'(t)``; at ``t = 0`` the flag is spanned by ``v`` and ``u``.
    """
    x, v, J, RJ = _jacobi_data(scene, s, u, t, kw.get("eps", 1e-4), kw.get("dt", 1e-3), kw.get("step", 1e-3))
    h, w = scene.fields(x)
    g = _fundamental(h, w, v)
    den = (v @ g @ v) * (J @ g @ J) - (v @ g @ J) ** 2
    if den <= 1e-10:
        raise DomainError("degenerate flag: u is (nearly) parallel to the velocity")
    return float((RJ @ g @ J) / den)


def liouville_volume_check(scene: Scene, s0: PhaseState, T: float, eps=1e-5, step=1e-3) -> float:
    """Ratio ``det g(Phi_T z) |det dPhi_T(z)| / det g(z)`` for the geodesic flow ``Phi``.

    The Legendre map pulls the canonical volume ``dx dp`` back to
    ``det(g_v) dx dv``, which the flow preserves, so the ratio is ``1`` up to
    discretisation error.  The flow Jacobian is a central difference with
    half-width ``eps`` in each of the ``2n`` phase coordinates.
    """
    if not isinstance(s0, PhaseState):
        s0 = PhaseState(*s0)
    n = scene.dim
    Z = np.concatenate([s0.x, s0.v])
    pert = np.concatenate([Z + eps * np.eye(2 * n), Z - eps * np.eye(2 * n)])
    batch = np.vstack([Z[None], pert])
    Xe, Ve = _flow_batch(scene, batch[:, :n], batch[:, n:], T, step)
    Ze = np.hstack([Xe, Ve])
    jac = (Ze[1 : 2 * n + 1] - Ze[2 * n + 1 :]).T / (2 * eps)
    h0, w0 = scene.fields(s0.x)
    h1, w1 = scene.fields(Xe[0])
    g0 = _fundamental(h0, w0, s0.v)
    g1 = _fundamental(h1, w1, Ve[0])
    return float(np.linalg.det(g1) * abs(np.linalg.det(jac)) / np.linalg.det(g0))


def speed_drift(traj: Trajectory) -> float:
    """``max_t |F(gamma'(t)) - F(gamma'(0))|``."""
    F = traj.speeds()
    return float(np.max(np.abs(F - F[0])))


def el_residual(scene: Scene, position, velocity, acceleration, times) -> float:
    """Max ``|gamma'' - a(gamma, gamma')|`` for a closed-form curve."""
    t = np.asarray(times, dtype=float)
    X, V, A = position(t), velocity(t), acceleration(t)
    return float(np.max(np.abs(A - _accel(scene, X, V))))


__all__ = [
    "PhaseState",
    "Trajectory",
    "geodesic_accel",
    "integrate_geodesic",
    "zermelo_geodesic",
    "estimate_jacobi_operator",
    "flag_curvature",
    "liouville_volume_check",
    "speed_drift",
    "el_residual",
]
