"""Jacobi triples and their symplectic calculus.

A Jacobi triple is a vector bundle over an interval with a metric connection
``D`` and a self-adjoint curvature endomorphism ``R``.  Everything here works in
a ``D``-parallel orthonormal frame, where ``D`` becomes ``d/dt`` and a triple is
just a curve ``t -> R(t)`` of symmetric ``n x n`` matrices.  Jacobi fields solve
``J'' + R J = 0``; the space of them is ``2n``-dimensional and carries the
conserved symplectic form ``omega(J1, J2) = <J1', J2> - <J1, J2'>``.

Solutions are obtained from the fundamental matrix of the first-order system,
integrated once per triple and step with RK4.  The fundamental matrix is kept
in extended precision: for indefinite curvature the fields grow exponentially
and ``omega`` is a difference of large numbers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import DomainError, NumericError, PreconditionError

LD = np.longdouble
DEFAULT_DOMAIN = (0.0, 10 * math.pi)
FRAME_FD = 1e-5  # step of the finite differences of the vertical projection
RANK_TOL = 1e-8  # singular values below this count as zero in frames
FRAME_JUMP = 0.5


# --- triples -----------------------------------------------------------------------

class JacobiTriple:
    """Curvature curve ``R(t)`` of a Jacobi triple in a parallel orthonormal frame.

    Parameters
    ----------
    n : int
        Rank of the bundle.
    R : callable
        ``R(t)`` for scalar ``t`` returns ``(n, n)``; for an array of times it
        should return ``(m, n, n)`` (scalar-only callables are vectorised by a
        loop).
    domain : (float, float)
    spec : JSON-compatible description used for serialisation, optional.
    """

    def __init__(self, n: int, R: Callable, domain=DEFAULT_DOMAIN, name="custom", spec=None, constant=False, step=1e-3):
        self.n = int(n)
        if self.n < 1:
            raise DomainError("rank must be positive")
        a, b = (float(x) for x in domain)
        if not a < b:
            raise DomainError("domain must be an interval [a, b] with a < b")
        self.domain = (a, b)
        self._R = R
        self.name = name
        self.spec = spec
        self.constant = constant
        self.step = float(step)
        self._cache = {}
        probe = self.R(np.linspace(a, b, 17))
        if probe.shape != (17, self.n, self.n) or not np.all(np.isfinite(probe)):
            raise DomainError(f"R must return finite {self.n}x{self.n} matrices")
        if np.max(np.abs(probe - np.swapaxes(probe, -1, -2))) > 1e-12:
            raise DomainError("R(t) is not symmetric")

    def R(self, t):
        """Curvature at ``t`` (scalar) or at an array of times."""
        t_arr = np.asarray(t, dtype=float)
        flat = t_arr.reshape(-1)
        try:
            out = np.asarray(self._R(flat), dtype=float)
        except TypeError:  # callables that only accept scalar times
            out = None
        if out is None or out.shape != (flat.size, self.n, self.n):
            out = np.stack([np.asarray(self._R(float(s)), dtype=float).reshape(self.n, self.n) for s in flat])
        return out.reshape(t_arr.shape + (self.n, self.n))

    def with_domain(self, domain):
        return JacobiTriple(self.n, self._R, domain, self.name, self.spec, self.constant, self.step)

    def check_time(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.domain
        slack = 1e-12 * max(1.0, abs(a), abs(b))
        if np.any(t < a - slack) or np.any(t > b + slack):
            raise DomainError(f"time outside the domain [{a:g}, {b:g}]")

    def fundamental(self, step=None) -> "_Fundamental":
        step = self.step if step is None else float(step)
        if step <= 0:
            raise DomainError("step must be positive")
        if step not in self._cache:
            self._cache[step] = _Fundamental(self, step)
        return self._cache[step]

    def to_json(self):
        if self.spec is None:
            raise DomainError("only catalog and diagonal triples can be serialised")
        return {"n": self.n, "R": self.spec, "domain": list(self.domain)}

    def __repr__(self):
        return f"JacobiTriple({self.name!r}, n={self.n}, domain={self.domain})"


def _constant_R(M):
    M = np.asarray(M, dtype=float)
    return lambda t: np.broadcast_to(M, np.shape(t) + M.shape)


CATALOG = ("flat", "sphere", "mixed", "hopf")


def catalog(name, n=None, domain=DEFAULT_DOMAIN) -> JacobiTriple:
    """Catalog triple: ``"flat"`` (R = 0), ``"sphere"`` (R = I), ``"mixed"``
    (R = diag(1, 0)), ``"hopf"`` (R = I_2), or ``{"diag": [...]}``."""
    if isinstance(name, dict):
        if set(name) != {"diag"}:
            raise DomainError("a custom triple is given as {'diag': [...]}")
        d = np.asarray(name["diag"], dtype=float).reshape(-1)
        if n is not None and n != d.size:
            raise DomainError("n does not match the diagonal")
        return JacobiTriple(d.size, _constant_R(np.diag(d)), domain, "diag", {"diag": d.tolist()}, True)
    if name == "flat":
        n = 2 if n is None else n
        return JacobiTriple(n, _constant_R(np.zeros((n, n))), domain, name, name, True)
    if name == "sphere":
        n = 2 if n is None else n
        return JacobiTriple(n, _constant_R(np.eye(n)), domain, name, name, True)
    if name in ("mixed", "hopf"):
        if n not in (None, 2):
            raise DomainError(f"the {name} triple has rank 2")
        R = np.diag([1.0, 0.0]) if name == "mixed" else np.eye(2)
        return JacobiTriple(2, _constant_R(R), domain, name, name, True)
    raise DomainError(f"unknown triple {name!r}; valid names: {', '.join(CATALOG)} or {{'diag': [...]}}")


def random_triple(rng, n, bound=2.0, domain=(0.0, 10.0), modes=3) -> JacobiTriple:
    """Smooth random curvature ``R(t) = sum_k c_k(t) M_k`` with ``||R(t)||_2 <= bound``.

    The ``M_k`` are random symmetric matrices scaled so that their spectral
    norms sum to ``bound``; the coefficients are 1, cosines and sines.
    """
    Ms = [rng.normal(size=(n, n)) for _ in range(modes)]
    Ms = [0.5 * (M + M.T) for M in Ms]
    total = sum(np.linalg.norm(M, 2) for M in Ms)
    Ms = np.array([bound * M / total for M in Ms])
    freq = rng.uniform(0.2, 2.0, size=modes)
    phase = rng.uniform(0.0, 2 * np.pi, size=modes)

    def R(t):
        t = np.asarray(t, dtype=float)
        c = np.cos(freq * t[..., None] + phase)
        c[..., 0] = 1.0
        return np.einsum("...k,kij->...ij", c, Ms)

    return JacobiTriple(n, R, domain, "random")


# --- fundamental matrix ------------------------------------------------------------------

def _generator(R):
    """First-order matrices ``[[0, I], [-R, 0]]`` in extended precision."""
    n = R.shape[-1]
    A = np.zeros(R.shape[:-2] + (2 * n, 2 * n), dtype=LD)
    A[..., :n, n:] = np.eye(n, dtype=LD)
    A[..., n:, :n] = -R.astype(LD)
    return A


def _rk4_increments(triple, t, h):
    """Increment matrices ``M - I`` of one RK4 step of size ``h`` from ``t``."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float) * np.ones_like(t)
    A0 = _generator(triple.R(t))
    Am = _generator(triple.R(t + 0.5 * h))
    A1 = _generator(triple.R(t + h))
    hh = h.astype(LD)[..., None, None]
    eye = np.eye(A0.shape[-1], dtype=LD)
    K1 = A0
    K2 = Am @ (eye + 0.5 * hh * K1)
    K3 = Am @ (eye + 0.5 * hh * K2)
    K4 = A1 @ (eye + hh * K3)
    return hh / 6 * (K1 + 2 * K2 + 2 * K3 + K4)


class _Fundamental:
    """Fundamental matrix ``Phi(t)`` with ``Phi(a) = I`` on a uniform grid."""

    def __init__(self, triple, step):
        a, b = triple.domain
        N = max(1, math.ceil((b - a) / step - 1e-9))
        self.triple = triple
        self.N = N
        self.h = (b - a) / N
        self.times = a + self.h * np.arange(N + 1)
        self.times[-1] = b
        dim = 2 * triple.n
        if triple.constant:
            D = _rk4_increments(triple, np.array([a]), self.h)[0]
            steps = None
        else:
            steps = _rk4_increments(triple, self.times[:-1], self.h)
        phi = np.empty((N + 1, dim, dim), dtype=LD)
        Y = np.eye(dim, dtype=LD)
        comp = np.zeros_like(Y)
        phi[0] = Y
        for k in range(N):
            # compensated summation of the increments keeps the rounding error of
            # Y + dY at the size of dY instead of Y
            inc = (D if steps is None else steps[k]) @ Y - comp
            new = Y + inc
            comp = (new - Y) - inc
            Y = new
            phi[k + 1] = Y
        self.phi = phi

    def at(self, t):
        """``Phi(t)`` (extended precision); off-grid via one RK4 sub-step."""
        t = np.asarray(t, dtype=float)
        self.triple.check_time(t)
        a = self.triple.domain[0]
        k = np.clip(np.rint((t - a) / self.h).astype(np.int64), 0, self.N)
        delta = t - self.times[k]
        out = self.phi[k].copy()
        off = delta != 0
        if np.any(off):
            D = _rk4_increments(self.triple, self.times[k][off], delta[off])
            out[off] = self.phi[k][off] + D @ self.phi[k][off]
        return out


# --- fields ------------------------------------------------------------------------------

@dataclass(eq=False)
class JacobiField:
    """A solution of ``J'' + R J = 0`` with ``(J, J')`` given at the domain start."""

    triple: JacobiTriple
    initial: np.ndarray
    step: float = 1e-3

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float).reshape(-1)
        if self.initial.size != 2 * self.triple.n:
            raise DomainError(f"initial data must have {2 * self.triple.n} entries")
        if not np.all(np.isfinite(self.initial)):
            raise DomainError("non-finite initial data")
        fund = self.triple.fundamental(self.step)
        self._fund = fund
        self._states = fund.phi @ self.initial.astype(LD)

    @property
    def times(self):
        return self._fund.times

    @property
    def J(self):
        return self._states[:, : self.triple.n].astype(float)

    @property
    def dJ(self):
        return self._states[:, self.triple.n :].astype(float)

    def state(self, t, precise=False):
        """``(J(t), J'(t))``; extended precision with ``precise=True``."""
        s = self._fund.at(t) @ self.initial.astype(LD)
        return s if precise else s.astype(float)

    def residual(self):
        """Max ``|J'' + R J|`` at interior grid points, ``J''`` by five-point differences."""
        J = self._states[:, : self.triple.n]
        h = LD(self._fund.h)
        second = (-J[4:] + 16 * J[3:-1] - 30 * J[2:-2] + 16 * J[1:-3] - J[:-4]) / (12 * h * h)
        RJ = np.einsum("tij,tj->ti", self.triple.R(self.times[2:-2]).astype(LD), J[2:-2])
        return float(np.max(np.abs(second + RJ), initial=0.0))

    def to_csv(self, path):
        n = self.triple.n
        header = ",".join(["t"] + [f"J{i + 1}" for i in range(n)] + [f"dJ{i + 1}" for i in range(n)])
        data = np.column_stack([self.times, self.J, self.dJ])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_field_csv(path):
    """Read a field CSV into ``(times, J, dJ)`` arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    n = (len(header) - 1) // 2
    if header[0] != "t" or len(header) != 2 * n + 1:
        raise DomainError("not a Jacobi field CSV")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1 : n + 1], data[:, n + 1 :]


def solve_jacobi(triple: JacobiTriple, J0, grid_step: float = 1e-3) -> JacobiField:
    """RK4 solution of ``J'' = -R(t) J`` with ``(J, J')(t_min) = J0``."""
    return JacobiField(triple, J0, grid_step)


def omega(triple: JacobiTriple, J1: JacobiField, J2: JacobiField, t: float) -> float:
    """Symplectic form ``<J1', J2> - <J1, J2'>`` evaluated at ``t``."""
    n = triple.n
    if J1.triple is not triple or J2.triple is not triple:
        raise DomainError("fields belong to a different triple")
    s1, s2 = J1.state(t, precise=True), J2.state(t, precise=True)
    return float(np.dot(s1[n:], s2[:n]) - np.dot(s1[:n], s2[n:]))


def omega_series(J1: JacobiField, J2: JacobiField) -> np.ndarray:
    """``omega(J1, J2)`` at every grid time of two fields solved with the same step."""
    if J1.triple is not J2.triple or J1._fund is not J2._fund:
        raise DomainError("fields must share a triple and a grid")
    n = J1.triple.n
    s1, s2 = J1._states, J2._states
    om = np.sum(s1[:, n:] * s2[:, :n], axis=1) - np.sum(s1[:, :n] * s2[:, n:], axis=1)
    return om.astype(float)


def _omega_matrix(n):
    W = np.zeros((2 * n, 2 * n))
    W[n:, :n] = np.eye(n)
    W[:n, n:] = -np.eye(n)
    return W


# --- subspaces ---------------------------------------------------------------------------

@dataclass(eq=False)
class Subspace:
    """Span of Jacobi fields, given by initial conditions ``(k, 2n)`` at the domain start."""

    basis: np.ndarray
    triple: Optional[JacobiTriple] = None

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.size == 0:
            n2 = 2 * self.triple.n if self.triple is not None else (B.shape[-1] if B.ndim == 2 else 0)
            B = np.zeros((0, n2))
        if B.ndim == 1:
            B = B[None, :]
        if B.shape[1] % 2:
            raise DomainError("initial conditions need an even number of entries")
        if self.triple is not None and B.shape[1] != 2 * self.triple.n:
            raise DomainError(f"initial conditions must have {2 * self.triple.n} entries")
        if not np.all(np.isfinite(B)):
            raise DomainError("non-finite basis")
        if B.shape[0]:
            s = np.linalg.svd(B, compute_uv=False)
            if s[-1] <= 1e-10 * s[0] or B.shape[0] > B.shape[1]:
                raise DomainError("basis vectors are linearly dependent")
        self.basis = B

    @property
    def n(self):
        return self.basis.shape[1] // 2

    @property
    def dim(self):
        return self.basis.shape[0]

    def attach(self, triple):
        return Subspace(self.basis, triple)

    def _need_triple(self):
        if self.triple is None:
            raise DomainError("subspace is not attached to a triple")
        return self.triple

    def states(self, t, step=None, precise=False):
        """``(J(t); J'(t))`` of the basis fields as ``(..., 2n, k)`` matrices."""
        triple = self._need_triple()
        s = triple.fundamental(step).at(t) @ self.basis.T.astype(LD)
        return s if precise else s.astype(float)

    def values(self, t, step=None):
        return self.states(t, step)[..., : self.n, :]

    def fields(self, step=1e-3):
        return [JacobiField(self._need_triple(), b, step) for b in self.basis]

    def to_json(self):
        data = self._need_triple().to_json()
        data["basis"] = self.basis.tolist()
        return data


def triple_from_json(data) -> JacobiTriple:
    """Triple from ``{"n", "R", "domain"}`` (``R`` a catalog name or ``{"diag": [...]}``)."""
    domain = tuple(data.get("domain", DEFAULT_DOMAIN))
    triple = catalog(data["R"], data.get("n"), domain)
    if "n" in data and int(data["n"]) != triple.n:
        raise DomainError("n does not match the curvature")
    return triple


def subspace_from_json(data) -> Subspace:
    triple = triple_from_json(data)
    return Subspace(np.asarray(data.get("basis", []), dtype=float).reshape(-1, 2 * triple.n), triple)


def load_json(path):
    """Triple and subspace stored in a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    sub = subspace_from_json(data)
    return sub.triple, sub


@dataclass(frozen=True)
class SubspaceClass:
    isotropic: bool
    lagrangian: bool
    max_omega: float


def classify_subspace(triple: JacobiTriple, S: Subspace, tol: float = 1e-10) -> SubspaceClass:
    """Isotropy (pairwise ``|omega| <= tol``) and the Lagrangian property (plus ``dim = n``)."""
    if S.n != triple.n:
        raise DomainError("subspace and triple have different ranks")
    W = S.basis @ _omega_matrix(triple.n) @ S.basis.T
    m = float(np.max(np.abs(W), initial=0.0))
    iso = m <= tol
    return SubspaceClass(iso, iso and S.dim == triple.n, m)


def _require_isotropic(S, tol=1e-8):
    triple = S._need_triple()
    c = classify_subspace(triple, S, tol)
    if not c.isotropic:
        raise PreconditionError(f"subspace is not isotropic (max |omega| = {c.max_omega:.3g})")
    return triple


# --- singular instants and vertical bundles ---------------------------------------------------

def _sigma_min(S, t):
    vals = S.values(t)
    return np.linalg.svd(vals, compute_uv=False)[..., -1]


def singular_instants(S: Subspace, scan_step: float = 1e-2, tol: float = 1e-6, window=None) -> list:
    """Times in the domain where the basis values ``J(t)`` drop rank.

    ``sigma_min(J(t))`` is scanned on a grid; every local minimum (domain
    endpoints included) is refined by a bounded scalar minimisation to about
    ``1e-9`` and kept when ``sigma_min <= tol``.
    """
    triple = _require_isotropic(S)
    if S.dim == 0:
        return []
    a, b = window if window is not None else triple.domain
    m = max(2, math.ceil((b - a) / scan_step)) + 1
    ts = np.linspace(a, b, m)
    st = S.states(ts)
    sig = np.linalg.svd(st[:, : S.n], compute_uv=False)[:, -1]
    # a zero within one scan step needs sigma_min <= step * |J'|
    reach = 2.0 * (ts[1] - ts[0]) * np.linalg.norm(st[:, S.n :], ord=2, axis=(-2, -1))
    found = []
    for i in range(m):
        if sig[i] > max(tol, reach[i]):
            continue
        left = sig[i - 1] if i > 0 else np.inf
        right = sig[i + 1] if i < m - 1 else np.inf
        if not (sig[i] <= left and sig[i] <= right):
            continue
        t_i = ts[i]
        lo, hi = ts[max(i - 1, 0)] - t_i, ts[min(i + 1, m - 1)] - t_i
        # minimise in the offset from the scan point: the absolute tolerance then applies
        res = minimize_scalar(lambda s: float(_sigma_min(S, t_i + s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-11})
        val, t = min((float(res.fun), t_i + float(res.x)), (float(sig[i]), float(t_i)))
        if val <= tol and not any(abs(t - u) < 10 * scan_step for u in found):
            found.append(float(t))
    return sorted(found)


def _frames(S: Subspace, t, rank_tol=RANK_TOL):
    """Orthonormal bases ``(..., n, k)`` of ``V_t = I(t) + D(I^0_t)(t)``."""
    t = np.asarray(t, dtype=float)
    n, k = S.n, S.dim
    if k == 0:
        return np.zeros(t.shape + (n, 0))
    st = S.states(t)
    J, dJ = st[..., :n, :], st[..., n:, :]
    U, s, Vh = np.linalg.svd(J)
    scale = max(1.0, float(np.max(np.abs(S.basis))))
    out = U[..., :, :k].copy()
    bad = s[..., -1] <= rank_tol * scale
    for idx in zip(*np.nonzero(bad)) if bad.ndim else ([()] if bad else []):
        r = int(np.sum(s[idx] > rank_tol * scale))
        ker = Vh[idx][r:].T
        D = dJ[idx] @ ker
        Q, _ = np.linalg.qr(np.concatenate([U[idx][:, :r], D], axis=1))
        out[idx] = Q
    return out


def vertical_bundle(S: Subspace, t: float) -> np.ndarray:
    """Orthonormal basis (columns, ``n x dim S``) of the vertical space ``V_t``."""
    _require_isotropic(S)
    S.triple.check_time(t)
    return _frames(S, float(t))


def _projection(S, t):
    F = _frames(S, t)
    return F @ np.swapaxes(F, -1, -2)


def _projection_derivative(S, t, h=FRAME_FD):
    """``(P, P')`` with ``P'`` by central differences (one-sided 3-point at the domain ends)."""
    t = np.asarray(t, dtype=float)
    a, b = S.triple.domain
    # stencil offsets: central inside, forward/backward near the ends
    fwd = t - h < a
    bwd = (t + h > b) & ~fwd
    o1 = np.where(fwd, h, np.where(bwd, -h, -h))
    o2 = np.where(fwd, 2 * h, np.where(bwd, -2 * h, h))
    P0, P1, P2 = _projection(S, t), _projection(S, t + o1), _projection(S, t + o2)
    jump = np.maximum.reduce([np.linalg.norm(X - Y, axis=(-2, -1)) for X, Y in ((P0, P1), (P0, P2), (P1, P2))])
    if np.any(jump > FRAME_JUMP):
        where = np.atleast_1d(t)[np.atleast_1d(jump > FRAME_JUMP)][0]
        raise NumericError(f"vertical frame jumps near t = {where:.6g}; use a finer step")
    sign = np.where(bwd, -1.0, 1.0)[..., None, None]
    one_sided = sign * (-3 * P0 + 4 * P1 - P2) / (2 * h)
    central = (P2 - P1) / (2 * h)
    dP = np.where((fwd | bwd)[..., None, None], one_sided, central)
    return P0, dP


def a_tensor_matrix(S: Subspace, t) -> np.ndarray:
    """Matrix of the mixing tensor, ``(I - 2P) P'`` at ``t``."""
    _require_isotropic(S)
    S.triple.check_time(t)
    P, dP = _projection_derivative(S, t)
    return (np.eye(S.n) - 2 * P) @ dP


def a_tensor(S: Subspace, t: float, X) -> np.ndarray:
    """``A(X) = (D X^V)^H + (D X^H)^V``.

    With the vertical projection ``P(t)`` this is ``(I - 2P) P' X``; ``P'`` is a
    central difference of the projection onto ``V_t``.  The projection does not
    depend on the choice of frame, so no frame alignment is needed.
    """
    return a_tensor_matrix(S, float(t)) @ np.asarray(X, dtype=float)


# --- transverse triples ------------------------------------------------------------------

class TransverseTriple(JacobiTriple):
    """Transverse triple with its ``D_H``-parallel frame ``Xi(t)`` (``n x m``)."""

    def __init__(self, parent, S, times, frames, Rt, domain):
        self.parent = parent
        self.subspace = S
        self.frame_times = times
        self.frames = frames
        self._spline = CubicSpline(times, Rt, axis=0)
        self._frame_spline = CubicSpline(times, frames, axis=0)
        m = Rt.shape[-1]

        def R(t):
            r = self._spline(np.asarray(t, dtype=float))
            return 0.5 * (r + np.swapaxes(r, -1, -2))

        super().__init__(m, R, domain, f"transverse({parent.name})", step=parent.step)

    def frame(self, t):
        return self._frame_spline(np.asarray(t, dtype=float))


def transverse_triple(triple: JacobiTriple, S: Subspace, step: float = 1e-3, domain=None) -> JacobiTriple:
    """Transverse triple ``(H, D_H, R_H - 3 A^2|_H)`` of an isotropic subspace.

    A frame of ``H = V^perp`` is transported by ``Xi' = -P' Xi`` (the
    ``D_H``-parallel condition) with RK4, and ``Xi^T (R - 3 A^2) Xi`` is
    sampled on the grid and interpolated by a cubic spline.
    """
    if S.triple is not triple:
        raise DomainError("subspace belongs to a different triple")
    _require_isotropic(S)
    if S.dim == 0:
        return triple if domain is None else triple.with_domain(domain)
    n, k = triple.n, S.dim
    m = n - k
    a, b = domain if domain is not None else triple.domain
    triple.check_time(np.array([a, b]))
    N = max(2, math.ceil((b - a) / step - 1e-9))
    h = (b - a) / N
    times = a + h * np.arange(N + 1)
    times[-1] = b
    half = np.concatenate([times, 0.5 * (times[1:] + times[:-1])])
    P_all, dP_all = _projection_derivative(S, half)
    P, dP = P_all[: N + 1], dP_all[: N + 1]
    dP_mid = dP_all[N + 1 :]
    if m == 0:
        raise PreconditionError("the subspace is Lagrangian; the transverse bundle is zero")
    # initial frame: orthonormal complement of V at a
    U, _, _ = np.linalg.svd(np.eye(n) - P[0])
    Xi = U[:, :m]
    frames = np.empty((N + 1, n, m))
    frames[0] = Xi
    for i in range(N):
        k1 = -dP[i] @ Xi
        k2 = -dP_mid[i] @ (Xi + 0.5 * h * k1)
        k3 = -dP_mid[i] @ (Xi + 0.5 * h * k2)
        k4 = -dP[i + 1] @ (Xi + h * k3)
        Xi = Xi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        frames[i + 1] = Xi
    drift = np.max(np.abs(np.swapaxes(frames, -1, -2) @ frames - np.eye(m)))
    leak = np.max(np.abs(P @ frames))
    if not (np.isfinite(drift) and drift < 1e-6 and leak < 1e-6):
        raise NumericError(f"transverse frame integration failed (drift {drift:.3g}, leak {leak:.3g})")
    A = (np.eye(n) - 2 * P) @ dP
    Rfull = triple.R(times) - 3 * A @ A
    Rt = np.swapaxes(frames, -1, -2) @ Rfull @ frames
    Rt = 0.5 * (Rt + np.swapaxes(Rt, -1, -2))
    return TransverseTriple(triple, S, times, frames, Rt, (a, b))


def project_transverse(tt: TransverseTriple, J0) -> np.ndarray:
    """Initial data at the domain start of the horizontal part of a Jacobi field.

    ``y = Xi^T J`` and ``y' = Xi^T (J' - P' J)``, the latter being the frame
    expression of ``D_H J^H``.
    """
    S = tt.subspace
    a = tt.domain[0]
    J0 = np.asarray(J0, dtype=float).reshape(-1)
    n = tt.parent.n
    state = (tt.parent.fundamental().at(a) @ J0.astype(LD)).astype(float)
    _, dP = _projection_derivative(S, a)
    Xi = tt.frame(a)
    return np.concatenate([Xi.T @ state[:n], Xi.T @ (state[n:] - dP @ state[:n])])


def symplectic_isomorphism_check(tt: TransverseTriple, fields, t=None) -> float:
    """Max ``|omega_H(y_i, y_j) - omega(J_i, J_j)|`` for fields in ``I^omega``.

    Fields outside the symplectic complement of the subspace are rejected.
    """
    parent, S = tt.parent, tt.subspace
    n = parent.n
    W = _omega_matrix(n)
    fields = [np.asarray(f, dtype=float).reshape(-1) for f in fields]
    for f in fields:
        if S.dim and np.max(np.abs(S.basis @ W @ f)) > 1e-10 * max(1.0, np.linalg.norm(f)):
            raise PreconditionError("field is not in the symplectic complement of the subspace")
    ys = [project_transverse(tt, f) for f in fields]
    m = tt.n
    Wm = _omega_matrix(m)
    err = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            err = max(err, abs(float(ys[i] @ Wm @ ys[j]) - float(fields[i] @ W @ fields[j])))
    return err


# --- Riccati operators --------------------------------------------------------------------

def _require_lagrangian(triple, L, tol=1e-8):
    if L.triple is None:
        L = L.attach(triple)
    c = classify_subspace(triple, L, tol)
    if not c.lagrangian:
        raise PreconditionError("subspace is not Lagrangian")
    return L


def riccati_operator(triple: JacobiTriple, L: Subspace, t: float, cond_limit: float = 1e8) -> np.ndarray:
    """Riccati operator ``S = J'(t) J(t)^{-1}`` of a Lagrangian subspace."""
    L = _require_lagrangian(triple, L)
    triple.check_time(t)
    n = triple.n
    st = L.states(float(t))
    J, dJ = st[:n], st[n:]
    # J(t) is compared with the full state, which has rank n for a Lagrangian,
    # so that rank-one fields near a zero are caught as well
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] * cond_limit <= np.linalg.norm(st, 2):
        sing = singular_instants(L)
        near = min(sing, key=lambda s: abs(s - t)) if sing else None
        where = f"; nearest singular instant {near:.9g}" if near is not None else ""
        raise DomainError(f"t = {t:g} is singular for the Lagrangian{where}")
    S = np.linalg.solve(J.T, dJ.T).T
    asym = np.max(np.abs(S - S.T))
    if asym > 1e-8 * max(1.0, np.max(np.abs(S))):
        raise NumericError(f"Riccati operator is not self-adjoint (asymmetry {asym:.3g})")
    return 0.5 * (S + S.T)


def riccati_residual(triple: JacobiTriple, L: Subspace, t: float, fd_step: float = 1e-4) -> float:
    """``||S'(t) + S(t)^2 + R(t)||_F`` with ``S'`` by a five-point central difference."""
    S = {k: riccati_operator(triple, L, t + k * fd_step) for k in (-2, -1, 1, 2)}
    S0 = riccati_operator(triple, L, t)
    dS = (8 * (S[1] - S[-1]) - (S[2] - S[-2])) / (12 * fd_step)
    return float(np.linalg.norm(dS + S0 @ S0 + triple.R(t)))


@dataclass(frozen=True)
class TraceRiccatiReport:
    window: tuple
    applicable: bool
    curvature_psd: bool
    trace_curvature_nonnegative: bool
    singular_instants: list
    max_trace: float
    max_norm: float
    holds: Optional[bool]
    note: str = ""


def trace_riccati_check(triple: JacobiTriple, L: Subspace, scan=None, tol: float = 1e-6) -> TraceRiccatiReport:
    """Check that a Lagrangian regular on a long window has vanishing Riccati operator.

    ``scan`` is ``(start, stop, step)`` (default: the whole domain at 0.01).
    The check is reported as applicable only when ``R`` is positive
    semidefinite and ``L`` has no singular instant in the window.  ``holds`` is
    ``None`` when not applicable.
    """
    L = _require_lagrangian(triple, L)
    a, b, ds = scan if scan is not None else (*triple.domain, 1e-2)
    ts = np.linspace(a, b, max(2, math.ceil((b - a) / ds)) + 1)
    R = triple.R(ts)
    eig = np.linalg.eigvalsh(R)
    psd = bool(np.min(eig) >= -1e-10)
    tr_ok = bool(np.min(np.trace(R, axis1=-2, axis2=-1)) >= -1e-10)
    sing = singular_instants(L, scan_step=ds, window=(a, b))
    note = f"window [{a:g}, {b:g}] of length {b - a:g} stands in for the real line"
    if sing or not psd:
        reason = "singular instants in the window" if sing else "curvature is not positive semidefinite"
        return TraceRiccatiReport((a, b), False, psd, tr_ok, sing, math.nan, math.nan, None, f"{reason}; {note}")
    n = triple.n
    st = L.states(ts)
    Ss = np.linalg.solve(np.swapaxes(st[:, :n], -1, -2), np.swapaxes(st[:, n:], -1, -2))
    Ss = np.swapaxes(Ss, -1, -2)
    max_tr = float(np.max(np.abs(np.trace(Ss, axis1=-2, axis2=-1))))
    max_norm = float(np.max(np.linalg.norm(Ss, axis=(-2, -1))))
    return TraceRiccatiReport((a, b), True, psd, tr_ok, [], max_tr, max_norm, max_norm <= tol, note)


# --- Wilking decomposition ---------------------------------------------------------------

def _null_space(M, tol):
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, Vh = np.linalg.svd(M, full_matrices=M.shape[0] < M.shape[1])
    r = int(np.sum(s > tol))
    return Vh[r:].T


@dataclass
class WilkingResult:
    null_span: Subspace
    parallel_span: Subspace
    diagnostics: dict = field(default_factory=dict)

    @property
    def dims(self):
        return self.null_span.dim, self.parallel_span.dim


def wilking_decompose(triple: JacobiTriple, L: Subspace, scan_step: float = 1e-2, tol: float = 1e-6) -> WilkingResult:
    """Split a Lagrangian into fields vanishing somewhere and parallel fields.

    Requires ``R(t)`` positive semidefinite on the scan.  The null part is
    spanned by the kernels of ``J(t*)`` at singular instants; the parallel part
    is the common kernel of ``J'`` and ``R J`` over the scan.  Diagnostics hold
    the reconstruction error of the direct sum, the curvature and mixing
    tensor residuals of the null part and the transverse Riccati norm of the
    parallel part.
    """
    L = _require_lagrangian(triple, L)
    n = triple.n
    a, b = triple.domain
    ts = np.linspace(a, b, max(2, math.ceil((b - a) / scan_step)) + 1)
    R = triple.R(ts)
    lam = float(np.min(np.linalg.eigvalsh(R)))
    if lam < -1e-10:
        raise PreconditionError(f"curvature is not positive semidefinite (min eigenvalue {lam:.3g})")
    scale = max(1.0, float(np.max(np.abs(L.basis))))
    B = L.basis  # coefficients c give the field c @ B

    sing = singular_instants(L, scan_step)
    kernels = []
    for t in sing:
        J = L.values(t)
        kernels.append(_null_space(J, 1e-6 * scale))
    null_coef = np.concatenate(kernels, axis=1) if kernels else np.zeros((n, 0))
    if null_coef.shape[1]:
        U, s, _ = np.linalg.svd(null_coef, full_matrices=False)
        null_coef = U[:, s > 1e-8]
    st = L.states(ts)
    J, dJ = st[:, :n], st[:, n:]
    cons = np.concatenate([dJ, R @ J], axis=1).reshape(-1, n)
    par_coef = _null_space(cons, tol * scale)

    null = Subspace(null_coef.T @ B, triple)
    par = Subspace(par_coef.T @ B, triple)
    joint = np.concatenate([null.basis, par.basis], axis=0)
    if joint.shape[0]:
        coef, *_ = np.linalg.lstsq(joint.T, B.T, rcond=None)
        recon = float(np.max(np.abs(joint.T @ coef - B.T)))
    else:
        recon = float(np.max(np.abs(B)))
    overlap = 0.0
    if null.dim and par.dim:
        Qn, _ = np.linalg.qr(null.basis.T)
        Qp, _ = np.linalg.qr(par.basis.T)
        overlap = float(np.linalg.norm(Qn.T @ Qp, 2))
    diag = {
        "window": (a, b),
        "singular_instants": sing,
        "reconstruction_error": recon,
        "direct_sum_overlap": overlap,
        "dims_sum": null.dim + par.dim,
        "note": f"window [{a:g}, {b:g}] of length {b - a:g} stands in for the real line",
    }
    if null.dim and null.dim < n:
        sample = ts[:: max(1, len(ts) // 400)]
        P, dP = _projection_derivative(null, sample)
        H = np.eye(n) - P
        diag["curvature_residual"] = float(np.max(np.linalg.norm(H @ triple.R(sample) @ H, axis=(-2, -1))))
        A = (np.eye(n) - 2 * P) @ dP
        diag["a_tensor_residual"] = float(np.max(np.linalg.norm(A, axis=(-2, -1))))
        if par.dim:
            tt = transverse_triple(triple, null, step=scan_step)
            Lt = Subspace(np.array([project_transverse(tt, f) for f in par.basis]), tt)
            Sv = [riccati_operator(tt, Lt, t) for t in sample]
            diag["transverse_riccati_norm"] = float(max(np.linalg.norm(s) for s in Sv))
    else:
        diag["curvature_residual"] = 0.0
        diag["a_tensor_residual"] = 0.0
    if null.dim == 0 and par.dim:
        Sv = [riccati_operator(triple, par, t) for t in ts[:: max(1, len(ts) // 400)]]
        diag["transverse_riccati_norm"] = float(max(np.linalg.norm(s) for s in Sv))
    return WilkingResult(null, par, diag)


# --- initial-condition builders -------------------------------------------------------------

def _orthonormal(vectors, n, what):
    V = np.asarray(vectors, dtype=float).reshape(-1, n) if len(vectors) else np.zeros((0, n))
    if V.shape[0] and np.max(np.abs(V @ V.T - np.eye(V.shape[0]))) > 1e-10:
        raise DomainError(f"{what} is not orthonormal")
    return V


def l_jacobi_initial_conditions(tangent_basis, shape_operator, normal_basis, triple=None) -> Subspace:
    """Lagrangian of ``L``-Jacobi fields of a submanifold through ``gamma(a)``.

    ``shape_operator`` is the symmetric matrix of the shape operator in the
    tangent basis.  Tangent directions give ``(e_i, S e_i)``, normal ones
    ``(0, nu_j)``.
    """
    tangent_basis = list(tangent_basis)
    normal_basis = list(normal_basis)
    vecs = tangent_basis + normal_basis
    if not vecs:
        raise DomainError("need at least one basis vector")
    n = np.asarray(vecs[0]).size
    T = _orthonormal(tangent_basis, n, "tangent basis")
    N = _orthonormal(normal_basis, n, "normal basis")
    if T.shape[0] and N.shape[0] and np.max(np.abs(T @ N.T)) > 1e-10:
        raise DomainError("tangent and normal bases are not orthogonal")
    k = T.shape[0]
    Sm = np.asarray(shape_operator, dtype=float).reshape(k, k) if k else np.zeros((0, 0))
    if np.max(np.abs(Sm - Sm.T), initial=0.0) > 1e-12:
        raise DomainError("shape operator is not symmetric")
    rows = [np.concatenate([T[i], Sm[:, i] @ T]) for i in range(k)]
    rows += [np.concatenate([np.zeros(n), N[j]]) for j in range(N.shape[0])]
    return Subspace(np.array(rows), triple)


def holonomy_initial_conditions(vertical_basis, S, A_star, triple=None) -> Subspace:
    """Holonomy-type Jacobi fields: ``J(a) = v`` vertical, ``J'(a) = -(S + A*) v``.

    ``S`` and ``A_star`` are ambient ``n x n`` matrices.
    """
    V = np.atleast_2d(np.asarray(vertical_basis, dtype=float))
    n = V.shape[1]
    S = np.asarray(S, dtype=float).reshape(n, n)
    A_star = np.asarray(A_star, dtype=float).reshape(n, n)
    rows = [np.concatenate([v, -(S + A_star) @ v]) for v in V]
    return Subspace(np.array(rows), triple)


def hopf_line(triple: JacobiTriple) -> Subspace:
    """Rotating isotropic line ``J(t) = (cos t, sin t)`` of the hopf triple."""
    if triple.n != 2:
        raise DomainError("the rotating line lives in rank 2")
    a = triple.domain[0]
    return Subspace(np.array([[math.cos(a), math.sin(a), -math.sin(a), math.cos(a)]]), triple)
