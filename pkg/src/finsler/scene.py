"""Chart-based manifolds carrying Zermelo data, and the scenario registry.

A :class:`Scene` is a single chart of ``R^n`` (optionally quotiented by a
period lattice to a torus) together with vectorised evaluators for the
Riemannian metric ``h(x)`` and the wind ``w(x)``.  Torus scenes store and
integrate everything in the covering plane and only wrap on read.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, PreconditionError
from .minkowski import RandersDatum, _norm

Field = Callable[[np.ndarray], np.ndarray]


def _constant_matrix(m):
    m = np.array(m, dtype=float)
    return lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape)


def _constant_vector(c):
    c = np.array(c, dtype=float)
    return lambda x: np.broadcast_to(c, np.shape(x)[:-1] + c.shape)


@dataclass(frozen=True)
class SubmersionSpec:
    """Coordinate projection ``rho(x) = x[:k]`` onto a Randers base.

    ``base_h`` and ``base_w`` are vectorised evaluators on the base; the base
    wind has to be rho-related to the total-space wind, which
    :meth:`check_related` verifies at sample points.
    """

    base_dim: int
    base_h: Field
    base_w: Field
    base_periods: Optional[tuple] = None

    def project(self, x):
        return np.asarray(x, dtype=float)[..., : self.base_dim]

    def dproject(self, v):
        return np.asarray(v, dtype=float)[..., : self.base_dim]

    def vertical_basis(self, dim):
        """Basis of ``ker d rho`` (constant for coordinate projections)."""
        return np.eye(dim)[self.base_dim :]

    def base_scene(self, name="base"):
        return Scene(
            name=name,
            dim=self.base_dim,
            h_field=self.base_h,
            w_field=self.base_w,
            periods=self.base_periods,
        )


@dataclass(frozen=True, eq=False)
class Scene:
    """A chart with Zermelo data.

    Attributes
    ----------
    dim : int
        Dimension ``n`` of the chart.
    h_field, w_field : callable
        Vectorised maps ``(..., n) -> (..., n, n)`` and ``(..., n) -> (..., n)``.
    periods : tuple of float, optional
        Period lattice for torus scenes, ``None`` for Euclidean charts.
    submersion : SubmersionSpec, optional
    killing : bool
        Whether the wind is a Killing field of ``h`` (enables the Zermelo
        fast path for geodesics).
    constant : bool
        ``h`` and ``w`` do not depend on the point; spatial derivatives vanish.
    domain : callable, optional
        ``x -> bool array`` telling whether chart points are admissible.
    """

    name: str
    dim: int
    h_field: Field
    w_field: Field
    periods: Optional[tuple] = None
    submersion: Optional[SubmersionSpec] = None
    killing: bool = False
    constant: bool = False
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    @property
    def topology(self):
        return "torus" if self.periods is not None else "euclidean"

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        if self.domain is not None:
            ok = ok & self.domain(x)
        return ok

    def fields(self, x):
        """``(h(x), w(x))`` for a batch of chart points (no wrapping needed)."""
        return self.h_field(x), self.w_field(x)

    def norm(self, x, v):
        """Vectorised ``F(x, v)``."""
        h, w = self.fields(np.asarray(x, dtype=float))
        return _norm(h, w, np.asarray(v, dtype=float))


def wrap(scene: Scene, x) -> np.ndarray:
    """Reduce torus coordinates into ``[0, period)``; identity on Euclidean scenes."""
    x = np.asarray(x, dtype=float)
    if scene.periods is None:
        return x
    p = np.asarray(scene.periods, dtype=float)
    y = np.mod(x, p)
    # np.mod can return p itself for tiny negative inputs
    return np.where(y >= p, y - p, y)


def eval_scene(scene: Scene, x) -> RandersDatum:
    """Zermelo data at the chart point ``x`` as a validated :class:`RandersDatum`."""
    x = wrap(scene, np.asarray(x, dtype=float).reshape(-1))
    if x.size != scene.dim:
        raise DomainError(f"point of size {x.size} in a {scene.dim}-dimensional scene")
    if not scene.in_domain(x):
        raise DomainError(f"{x.tolist()} is outside the chart of scene {scene.name!r}")
    h, w = scene.fields(x)
    return RandersDatum(h, w)


def curve_length(scene: Scene, samples) -> float:
    """Finsler length ``int F(gamma'(t)) dt`` of a sampled curve.

    ``samples`` is any object with ``times`` (m,), ``x`` (m, n) and ``v``
    (m, n) arrays, e.g. a :class:`~finsler.geodesic.Trajectory`.  The integral
    uses composite Simpson quadrature on the samples.  The result depends on
    the orientation of the curve.
    """
    t = np.asarray(samples.times, dtype=float)
    x = np.asarray(samples.x, dtype=float)
    v = np.asarray(samples.v, dtype=float)
    if t.size < 2:
        raise DomainError("a curve needs at least two samples")
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite velocities")
    zero = ~np.any(v, axis=-1)
    if np.any(zero[1:-1]):
        warnings.warn("zero velocity inside the curve; it contributes 0 locally", RuntimeWarning, stacklevel=2)
    speed = scene.norm(x, v)
    return float(simpson(speed, x=t))


# --- registry ---------------------------------------------------------------------

def _cone_r2(wind=0.5):
    w = (0.0, float(wind))
    return Scene(
        name="cone_r2",
        dim=2,
        h_field=_constant_matrix(np.eye(2)),
        w_field=_constant_vector(w),
        submersion=SubmersionSpec(1, _constant_matrix(np.eye(1)), _constant_vector([0.0])),
        killing=True,
        constant=True,
        params={"wind": float(wind)},
    )


def _torus(wind=0.5, periods=(1.0, 1.0)):
    w = (0.0, float(wind))
    periods = tuple(float(p) for p in periods)
    return Scene(
        name="torus",
        dim=2,
        h_field=_constant_matrix(np.eye(2)),
        w_field=_constant_vector(w),
        periods=periods,
        submersion=SubmersionSpec(
            1, _constant_matrix(np.eye(1)), _constant_vector([0.0]), base_periods=periods[:1]
        ),
        killing=True,
        constant=True,
        params={"wind": float(wind), "periods": list(periods)},
    )


def _sin_wind_r3(amplitude=0.25, offset=0.25):
    a, b = float(amplitude), float(offset)

    def w_field(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 2] = a * np.sin(x[..., 0]) ** 2 + b
        return out

    return Scene(
        name="sin_wind_r3",
        dim=3,
        h_field=_constant_matrix(np.eye(3)),
        w_field=w_field,
        submersion=SubmersionSpec(2, _constant_matrix(np.eye(2)), _constant_vector([0.0, 0.0])),
        params={"amplitude": a, "offset": b},
    )


def _euclidean(dim=2):
    dim = int(dim)
    if dim < 1:
        raise DomainError("dim must be positive")
    sub = None
    if dim >= 2:
        sub = SubmersionSpec(dim - 1, _constant_matrix(np.eye(dim - 1)), _constant_vector(np.zeros(dim - 1)))
    return Scene(
        name="euclidean",
        dim=dim,
        h_field=_constant_matrix(np.eye(dim)),
        w_field=_constant_vector(np.zeros(dim)),
        submersion=sub,
        killing=True,
        constant=True,
        params={"dim": dim},
    )


def _sphere2(margin=0.1):
    margin = float(margin)

    def h_field(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = np.sin(x[..., 0]) ** 2
        return out

    def domain(x):
        th = np.asarray(x)[..., 0]
        return (th > margin) & (th < np.pi - margin)

    return Scene(
        name="sphere2",
        dim=2,
        h_field=h_field,
        w_field=_constant_vector(np.zeros(2)),
        killing=True,
        domain=domain,
        params={"margin": margin},
    )


_REGISTRY = {
    "cone_r2": _cone_r2,
    "torus": _torus,
    "sin_wind_r3": _sin_wind_r3,
    "euclidean": _euclidean,
    "sphere2": _sphere2,
}

SCENARIOS = tuple(_REGISTRY)


def scenario(name: str, **params) -> Scene:
    """Build a registry scene by name.

    Keyword arguments override numeric parameters, e.g. ``scenario("cone_r2",
    wind=0.3)`` or ``scenario("euclidean", dim=3)``.
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIOS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for scenario {name!r}: {exc}") from None


def load_scenario(path) -> Scene:
    """Load a scenario override file ``{"name": str, "params": {...}}``."""
    with open(path) as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict) or "name" not in spec:
        raise DomainError("scenario file needs a 'name' key")
    return scenario(spec["name"], **spec.get("params", {}))


def check_related(scene: Scene, points) -> float:
    """Max deviation ``|d rho(w(x)) - w*(rho(x))|`` over the given points."""
    sub = scene.submersion
    if sub is None:
        raise PreconditionError(f"scene {scene.name!r} has no submersion")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lhs = sub.dproject(scene.w_field(points))
    rhs = sub.base_w(sub.project(points))
    return float(np.max(np.abs(lhs - rhs)))


def random_points(scene: Scene, count, rng, box=2.0):
    """Uniform chart points inside the domain (a box of half-width ``box``)."""
    if scene.periods is not None:
        return rng.uniform(0.0, 1.0, size=(count, scene.dim)) * np.asarray(scene.periods)
    if scene.name == "sphere2":
        m = scene.params["margin"]
        th = rng.uniform(m + 1e-3, np.pi - m - 1e-3, size=count)
        ph = rng.uniform(-np.pi, np.pi, size=count)
        return np.column_stack([th, ph])
    return rng.uniform(-box, box, size=(count, scene.dim))
