"""Geometric control with families of horizontal unit geodesic fields.

Attainable sets and orbits are uncountable; they are approximated from below
by rasterising randomly sampled *words* (finite compositions of flows) onto an
occupancy grid.  Sampling is deterministic: block ``c`` of words is drawn from
a generator seeded with ``(seed, c)``, so grids are reproducible, independent
of the number of worker threads, and grow monotonically with the number of
samples.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .minkowski import _legendre, _norm, _fundamental
from .scene import Scene, random_points, wrap

BLOCK = 1024  # words per RNG block
MAX_POINTS = 4_000_000  # raster points held in memory per letter slot


class VectorField:
    """A vectorised vector field ``(..., n) -> (..., n)``.

    ``constant`` holds the value of a constant field, which lets flows be
    computed as exact translations.
    """

    def __init__(self, func: Callable, constant=None, name=""):
        self.func = func
        self.constant = None if constant is None else np.asarray(constant, dtype=float)
        self.name = name

    @classmethod
    def const(cls, value, name=""):
        value = np.asarray(value, dtype=float)
        return cls(lambda X: np.broadcast_to(value, np.shape(X)[:-1] + value.shape), value, name)

    def __call__(self, X):
        return self.func(np.asarray(X, dtype=float))

    def __repr__(self):
        return f"VectorField({self.name or self.func!r})"


def _lift_batch(scene, X, b, iters=60, tol=1e-14):
    """Horizontal lifts of the base vector ``b`` at many points (plain Newton)."""
    sub = scene.submersion
    k = sub.base_dim
    X = np.asarray(X, dtype=float)
    shape = X.shape[:-1]
    X = X.reshape(-1, scene.dim)
    h, w = scene.fields(X)
    h = np.broadcast_to(h, (X.shape[0],) + h.shape[-2:])
    z = -np.linalg.solve(h[:, k:, k:], (h[:, k:, :k] @ b)[..., None])[..., 0]
    B = np.broadcast_to(b, (X.shape[0], k))
    for _ in range(iters):
        v = np.concatenate([B, z], axis=1)
        p = _legendre(h, w, v)[:, k:]
        if np.max(np.abs(p)) <= tol:
            break
        g = _fundamental(h, w, v)
        z = z - np.linalg.solve(g[:, k:, k:], p[..., None])[..., 0]
    v = np.concatenate([B, z], axis=1)
    yb = sub.project(X)
    target = _norm(sub.base_h(yb), sub.base_w(yb), B)
    v = v * (target / _norm(h, w, v))[:, None]
    return v.reshape(shape + (scene.dim,))


def lifted_field(scene: Scene, direction) -> VectorField:
    """Horizontal lift of a constant unit base direction, as a vector field."""
    d = np.asarray(direction, dtype=float)
    return VectorField(lambda X: _lift_batch(scene, X, d), name=f"lift{d.tolist()}")


class ControlSystem:
    """A scene with a finite family of horizontal unit geodesic fields.

    The generators are certified on ``probe`` random points: ``F(f(x)) = 1``
    and horizontality, both within ``tol``.
    """

    def __init__(self, scene: Scene, generators: Sequence[VectorField], probe=100, tol=1e-8, seed=0, certify=True):
        self.scene = scene
        self.generators = [g if isinstance(g, VectorField) else VectorField(g) for g in generators]
        if not self.generators:
            raise DomainError("a control system needs at least one generator")
        if certify:
            self.certify(probe, tol, seed)

    @property
    def constant(self):
        return all(g.constant is not None for g in self.generators)

    def certify(self, probe=100, tol=1e-8, seed=0):
        rng = np.random.default_rng(seed)
        X = random_points(self.scene, probe, rng)
        h, w = self.scene.fields(X)
        for i, gen in enumerate(self.generators):
            V = np.broadcast_to(gen(X), X.shape)
            F = _norm(h, w, V)
            if np.max(np.abs(F - 1.0)) > tol:
                raise PreconditionError(f"generator {i} is not unit (max |F - 1| = {np.max(np.abs(F - 1)):.3g})")
            if self.scene.submersion is not None:
                basis = self.scene.submersion.vertical_basis(self.scene.dim)
                p = _legendre(h, w, V)
                if np.max(np.abs(p @ basis.T), initial=0.0) > tol:
                    raise PreconditionError(f"generator {i} is not horizontal")


def lifted_fan_system(scene: Scene, fan=8) -> ControlSystem:
    """Control family of horizontal unit geodesic fields for a registry scene.

    ``cone_r2`` and ``torus`` get the explicit fields ``(+-1, w2)``; other scenes
    with a submersion get horizontal lifts of a fan of base directions.
    """
    if scene.name in ("cone_r2", "torus"):
        a = scene.params["wind"]
        return ControlSystem(scene, [VectorField.const([1.0, a], "f1"), VectorField.const([-1.0, a], "f2")])
    if scene.submersion is None:
        raise PreconditionError(f"scene {scene.name!r} has no submersion")
    k = scene.submersion.base_dim
    if k == 1:
        dirs = [np.array([1.0]), np.array([-1.0])]
    else:
        th = 2 * np.pi * np.arange(fan) / fan
        dirs = [np.r_[np.cos(a), np.sin(a), np.zeros(k - 2)] for a in th]
    if scene.constant:
        gens = [VectorField.const(_lift_batch(scene, np.zeros((1, scene.dim)), d)[0]) for d in dirs]
    else:
        gens = [lifted_field(scene, d) for d in dirs]
    return ControlSystem(scene, gens)


@dataclass(frozen=True)
class Word:
    """Sequence of ``(generator index, duration)`` letters."""

    letters: tuple
    mode: str = "attainable"

    def __post_init__(self):
        letters = tuple((int(i), float(t)) for i, t in self.letters)
        if self.mode not in ("attainable", "orbit"):
            raise DomainError(f"unknown word mode {self.mode!r}")
        if self.mode == "attainable" and any(t < 0 for _, t in letters):
            raise DomainError("attainable words need non-negative durations")
        object.__setattr__(self, "letters", letters)


# --- flows ---------------------------------------------------------------------------

def _letter_points(system, X, gidx, dur, npts):
    """Flow each row of ``X`` along generator ``gidx[b]`` for time ``dur[b]``.

    Returns the ``npts`` intermediate points ``(npts, B, n)``; the last one is
    the endpoint.
    """
    gens = system.generators
    if system.constant:
        F = np.stack([g.constant for g in gens])[gidx]  # (B, n)
        s = (np.arange(1, npts + 1) / npts)[:, None, None]
        return X[None] + s * (dur[:, None] * F)[None]
    dt = (dur / npts)[:, None]
    out = np.empty((npts,) + X.shape)
    x = X.copy()

    groups = [(g, np.flatnonzero(gidx == i)) for i, g in enumerate(gens)]
    groups = [(g, rows) for g, rows in groups if rows.size]

    def f(y):
        out = np.empty_like(y)
        for g, rows in groups:
            out[rows] = g(y[rows])
        return out

    for k in range(npts):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = x
    return out


def apply_word(system: ControlSystem, q0, word: Word, step: float = 1e-3) -> np.ndarray:
    """Endpoint of the composed flows of a word (wrapped on torus scenes)."""
    x = np.asarray(q0, dtype=float).reshape(1, -1)
    for i, t in word.letters:
        if not 0 <= i < len(system.generators):
            raise DomainError(f"generator index {i} out of range")
        if t == 0:
            continue
        npts = 1 if system.constant else max(1, math.ceil(abs(t) / step - 1e-9))
        x = _letter_points(system, x, np.array([i]), np.array([t]), npts)[-1]
    return wrap(system.scene, x[0])


# --- occupancy grids --------------------------------------------------------------------

@dataclass
class ReachGrid:
    """Occupancy grid over an axis-aligned window ``(xmin, xmax, ymin, ymax)``.

    ``counts[i, j]`` is the number of raster samples that fell into cell
    ``(i, j)``; ``i`` indexes the first axis.
    """

    window: tuple
    resolution: float
    counts: np.ndarray
    axes: tuple = (0, 1)

    @classmethod
    def empty(cls, window, resolution, axes=(0, 1)):
        x0, x1, y0, y1 = (float(c) for c in window)
        if not (x0 < x1 and y0 < y1):
            raise DomainError("window must satisfy min < max on both axes")
        if resolution <= 0:
            raise DomainError("resolution must be positive")
        nx = max(1, int(round((x1 - x0) / resolution)))
        ny = max(1, int(round((y1 - y0) / resolution)))
        return cls((x0, x1, y0, y1), float(resolution), np.zeros((nx, ny), dtype=np.int64), tuple(axes))

    @property
    def shape(self):
        return self.counts.shape

    @property
    def occupancy(self):
        return self.counts > 0

    def coverage(self):
        return float(np.mean(self.occupancy))

    def centers(self):
        nx, ny = self.shape
        x0, _, y0, _ = self.window
        cx = x0 + (np.arange(nx) + 0.5) * self.resolution
        cy = y0 + (np.arange(ny) + 0.5) * self.resolution
        return np.meshgrid(cx, cy, indexing="ij")

    def cell_of(self, pts):
        """Flat cell index for 2-D points, ``-1`` outside the window."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        x0, _, y0, _ = self.window
        nx, ny = self.shape
        i = np.floor((pts[:, 0] - x0) / self.resolution).astype(np.int64)
        j = np.floor((pts[:, 1] - y0) / self.resolution).astype(np.int64)
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return np.where(ok, i * ny + j, -1)

    def add_points(self, pts):
        idx = self.cell_of(pts)
        idx = idx[idx >= 0]
        self.counts += np.bincount(idx, minlength=self.counts.size).reshape(self.shape)

    def merge(self, other: "ReachGrid"):
        """Cell-wise sum (associative and commutative)."""
        if other.shape != self.shape or other.window != self.window:
            raise DomainError("cannot merge grids over different windows")
        return ReachGrid(self.window, self.resolution, self.counts + other.counts, self.axes)

    def __le__(self, other):
        """Occupancy inclusion."""
        return bool(np.all(~self.occupancy | other.occupancy))


def _draw_block(seed, block, max_letters, n_gens, signed):
    rng = np.random.default_rng([int(seed), int(block)])
    m = rng.integers(1, max_letters + 1, size=BLOCK)
    gidx = rng.integers(0, n_gens, size=(BLOCK, max_letters))
    e = rng.exponential(size=(BLOCK, max_letters + 1))
    signs = rng.choice(np.array([-1.0, 1.0]), size=(BLOCK, max_letters))
    used = np.arange(max_letters)[None, :] < m[:, None]
    e[:, :max_letters] *= used
    frac = e[:, :max_letters] / e.sum(axis=1, keepdims=True)
    return gidx, frac, signs if signed else None


def _raster_words(system, q0, gidx, durs, grid, step):
    """Rasterise a batch of words (durations ``(B, m)``) into ``grid``."""
    scene = system.scene
    B, m = durs.shape
    X = np.broadcast_to(np.asarray(q0, dtype=float), (B, scene.dim)).copy()
    spacing = 0.5 * grid.resolution
    if not system.constant:
        spacing = min(spacing, step)
    ax = list(grid.axes)
    for j in range(m):
        d = durs[:, j]
        if not np.any(d):
            continue
        speed = 1.0
        if system.constant:
            speed = max(float(np.linalg.norm(g.constant)) for g in system.generators)
        npts = max(1, math.ceil(float(np.max(np.abs(d))) * speed / spacing))
        # keep memory bounded by splitting the batch
        chunk = max(1, MAX_POINTS // npts)
        for s in range(0, B, chunk):
            pts = _letter_points(system, X[s : s + chunk], gidx[s : s + chunk, j], d[s : s + chunk], npts)
            X[s : s + chunk] = pts[-1]
            grid.add_points(wrap(scene, pts)[..., ax])
    return X


def _reach(system, q0, horizon, max_letters, samples, window, resolution, seed, signed, step, threads, axes):
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if max_letters < 1:
        raise DomainError("max_letters must be at least 1")
    if samples < 0:
        raise DomainError("samples must be non-negative")
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    grid = ReachGrid.empty(window, resolution, axes)
    q0_cell = grid.cell_of(wrap(system.scene, q0)[list(axes)])
    if q0_cell[0] < 0:
        warnings.warn("the window does not contain q0", RuntimeWarning, stacklevel=3)
    grid.add_points(wrap(system.scene, q0)[list(axes)])
    n_blocks = math.ceil(samples / BLOCK)

    def work(c):
        part = ReachGrid.empty(window, resolution, axes)
        gidx, frac, signs = _draw_block(seed, c, max_letters, len(system.generators), signed)
        take = min(BLOCK, samples - c * BLOCK)
        gidx, frac = gidx[:take], frac[:take]
        durs = horizon * frac
        _raster_words(system, q0, gidx, durs, part, step)
        if signed:
            # the unsigned word is an orbit word too; keeps A_q inside O(q) cell-wise
            _raster_words(system, q0, gidx, durs * signs[:take], part, step)
        return part.counts

    if threads is None:
        threads = int(os.environ.get("FINSLER_REACH_THREADS", os.cpu_count() or 1))
    threads = max(1, min(int(threads), max(1, n_blocks)))
    if threads == 1:
        parts = map(work, range(n_blocks))
        for counts in parts:
            grid.counts += counts
    else:
        with ThreadPoolExecutor(threads) as pool:
            for counts in pool.map(work, range(n_blocks)):
                grid.counts += counts
    return grid


def attainable_set(
    system: ControlSystem,
    q0,
    horizon: float,
    max_letters: int,
    samples: int,
    window,
    resolution: float,
    seed: int = 0,
    step: float = 1e-2,
    threads: Optional[int] = None,
    axes=(0, 1),
) -> ReachGrid:
    """Occupancy grid of forward-time words from ``q0``.

    Each word has ``1..max_letters`` letters with generators drawn uniformly
    and non-negative durations uniform on ``{t : sum(t) <= horizon}``.  All
    intermediate points of each word are rasterised, as is ``q0`` itself.
    """
    return _reach(system, q0, horizon, max_letters, samples, window, resolution, seed, False, step, threads, axes)


def orbit_set(
    system: ControlSystem,
    q0,
    horizon: float,
    max_letters: int,
    samples: int,
    window,
    resolution: float,
    seed: int = 0,
    step: float = 1e-2,
    threads: Optional[int] = None,
    axes=(0, 1),
) -> ReachGrid:
    """Like :func:`attainable_set` with signed durations (``sum |t| <= horizon``).

    Every drawn word is rasterised both with its random sign pattern and with
    all signs positive.
    """
    return _reach(system, q0, horizon, max_letters, samples, window, resolution, seed, True, step, threads, axes)


# --- Lie brackets --------------------------------------------------------------------------

def _jacobian(f, x, step):
    n = x.size
    cols = [(np.asarray(f(x + step * e)) - np.asarray(f(x - step * e))) / (2 * step) for e in np.eye(n)]
    return np.stack(cols, axis=1)


def bracket(f, g, step=1e-5):
    """Lie bracket ``[f, g] = Dg f - Df g`` with finite-difference Jacobians."""

    def fg(x):
        x = np.asarray(x, dtype=float)
        return _jacobian(g, x, step) @ np.asarray(f(x)) - _jacobian(f, x, step) @ np.asarray(g(x))

    return fg


def lie_rank(fields, x, depth: int, step=1e-5, rtol=1e-8) -> int:
    """Numerical rank at ``x`` of the fields and their iterated brackets.

    ``depth = 1`` uses the fields alone, ``depth = d`` adds brackets of length
    up to ``d``.
    """
    if depth < 1:
        raise DomainError("depth must be at least 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    level = list(fields)
    vectors = [np.asarray(f(x), dtype=float).reshape(-1) for f in level]

    def rank(vs):
        s = np.linalg.svd(np.array(vs), compute_uv=False)
        return int(np.sum(s > rtol * max(s[0], 1e-300))) if s[0] > 0 else 0

    r = rank(vectors)
    for _ in range(depth - 1):
        if r == n:
            break
        level = [bracket(f, g, step) for f in fields for g in level]
        vectors += [np.asarray(b(x), dtype=float).reshape(-1) for b in level]
        r = rank(vectors)
    return r


# --- validation ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GridReport:
    false_positive_rate: float
    false_negative_rate: float
    agreement: float
    cells_compared: int
    cells_excluded: int


def compare_grid(grid: ReachGrid, oracle, boundary_band: float) -> GridReport:
    """Compare occupancy with a cell oracle, ignoring cells near its boundary.

    ``oracle`` maps points ``(m, 2)`` to booleans.  A cell is excluded when
    the oracle is not constant on a 16-point circle of radius ``boundary_band``
    (and on the half-radius circle) around the cell centre.
    """
    cx, cy = grid.centers()
    C = np.column_stack([cx.ravel(), cy.ravel()])
    inside = np.asarray(oracle(C), dtype=bool)
    keep = np.ones(C.shape[0], dtype=bool)
    if boundary_band > 0:
        ang = 2 * np.pi * np.arange(16) / 16
        ring = np.column_stack([np.cos(ang), np.sin(ang)])
        for r in (boundary_band, 0.5 * boundary_band):
            for d in ring:
                keep &= np.asarray(oracle(C + r * d), dtype=bool) == inside
    occ = grid.occupancy.ravel()
    o, c = inside[keep], occ[keep]
    neg, pos = np.sum(~o), np.sum(o)
    fp = float(np.sum(c & ~o) / neg) if neg else 0.0
    fn = float(np.sum(~c & o) / pos) if pos else 0.0
    agree = float(np.mean(c == o)) if o.size else 1.0
    return GridReport(fp, fn, agree, int(o.size), int(np.sum(~keep)))


def cone_oracle(wind=0.5):
    """Attainable set of the cone example, ``x2 >= |x1| * wind``."""
    return lambda P: np.asarray(P)[:, 1] >= wind * np.abs(np.asarray(P)[:, 0])


# --- output ----------------------------------------------------------------------------

GRID_HEADER = "i,j,x_center,y_center,occupied,samples"


def grid_to_csv(grid: ReachGrid, path):
    """Write one row per cell: ``i,j,x_center,y_center,occupied,samples``."""
    cx, cy = grid.centers()
    nx, ny = grid.shape
    I, Jg = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    with open(path, "w") as fh:
        fh.write(GRID_HEADER + "\n")
        for i, j, x, y, c in zip(I.ravel(), Jg.ravel(), cx.ravel(), cy.ravel(), grid.counts.ravel()):
            fh.write(f"{i},{j},{x:.17g},{y:.17g},{int(c > 0)},{c}\n")


def grid_from_csv(path, window, resolution, axes=(0, 1)) -> ReachGrid:
    """Read a grid written by :func:`grid_to_csv` back onto its window."""
    grid = ReachGrid.empty(window, resolution, axes)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        if fh.readline().strip() != GRID_HEADER:
            raise DomainError("not a grid CSV")
    idx = data[:, :2].astype(np.int64)
    if idx.size and (idx.max(axis=0) >= grid.shape).any():
        raise DomainError("grid CSV does not fit the window")
    grid.counts[idx[:, 0], idx[:, 1]] = data[:, 5].astype(np.int64)
    return grid


def grid_to_svg(grid: ReachGrid, path, cone_wind=None, scale=None):
    """Render occupied cells as squares; optionally overlay ``x2 = wind * |x1|``."""
    x0, x1, y0, y1 = grid.window
    scale = scale or 600.0 / max(x1 - x0, y1 - y0)
    W, H = (x1 - x0) * scale, (y1 - y0) * scale
    r = grid.resolution * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.1f}" height="{H:.1f}" viewBox="0 0 {W:.1f} {H:.1f}">',
        f'<rect width="{W:.1f}" height="{H:.1f}" fill="white"/>',
    ]
    for i, j in zip(*np.nonzero(grid.occupancy)):
        px = i * r
        py = H - (j + 1) * r
        parts.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{r:.2f}" height="{r:.2f}" fill="#3465a4"/>')
    if cone_wind is not None:
        xs = np.linspace(x0, x1, 201)
        pts = " ".join(f"{(x - x0) * scale:.2f},{H - (cone_wind * abs(x) - y0) * scale:.2f}" for x in xs)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#cc0000" stroke-width="2"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
