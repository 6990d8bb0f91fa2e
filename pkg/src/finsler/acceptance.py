"""Reproduction suite: the worked examples and property checks, with tolerances.

Each criterion is a function returning ``(passed, detail)``; :func:`run_suite`
times them, compares against the time budget and formats one line per
criterion.  The command line (``check --suite paper``) and the test-suite
share these functions.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import (
    ControlSystem,
    VectorField,
    attainable_set,
    compare_grid,
    cone_oracle,
    lie_rank,
    orbit_set,
    lifted_fan_system,
)
from .geodesic import PhaseState, Trajectory, _accel, flag_curvature, liouville_volume_check
from .jacobi import (
    Subspace,
    catalog,
    hopf_line,
    omega_series,
    random_triple,
    riccati_operator,
    riccati_residual,
    singular_instants,
    solve_jacobi,
    symplectic_isomorphism_check,
    transverse_triple,
    wilking_decompose,
    _omega_matrix,
)
from .minkowski import RandersDatum, _legendre, randers_norm
from .scene import curve_length, scenario
from .submersion import horizontal_lift_vector, is_horizontal
from .errors import PreconditionError

SEED = 20240601
CONE_WINDOW = (-2.0, 2.0, -0.25, 2.75)


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    budget: float
    check: Callable[[], tuple]


@dataclass(frozen=True)
class Outcome:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    @property
    def within_budget(self):
        return self.seconds < self.budget

    @property
    def ok(self):
        return self.passed and self.within_budget

    def line(self):
        tag = "PASS" if self.ok else "FAIL"
        slow = "" if self.within_budget else f" [over budget of {self.budget:g} s]"
        return f"{tag} {self.number:2d} {self.title}: {self.detail} ({self.seconds:.2f} s){slow}"


# --- criteria ----------------------------------------------------------------------

def randers_equation(count=1000, seed=SEED):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 5))
        M = rng.normal(size=(n, n))
        h = M @ M.T + 0.1 * np.eye(n)
        w = rng.normal(size=n)
        w *= rng.uniform(0.0, 0.95) / math.sqrt(w @ h @ w)
        v = rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
        d = RandersDatum(h, w)
        F = randers_norm(d, v)
        r = v - F * d.w
        worst = max(worst, abs(math.sqrt(r @ d.h @ r) - F) / (1 + F))
    return worst <= 1e-10, f"max |‖v - Fw‖_h - F|/(1+F) = {worst:.2e} (tol 1e-10)"


def cone_fields():
    scene = scenario("cone_r2")
    system = lifted_fan_system(scene)
    x = np.zeros(2)
    gens = [g(x) for g in system.generators]
    unit = max(abs(scene.norm(x, f) - 1.0) for f in gens)
    horiz = all(is_horizontal(scene, PhaseState(x, f), tol=1e-10) for f in gens)
    lifts = [horizontal_lift_vector(scene, x, [s]) for s in (1.0, -1.0)]
    lift_err = max(float(np.max(np.abs(l - f))) for l, f in zip(lifts, gens))
    asym = not np.allclose(-gens[0], gens[1])
    ok = unit <= 1e-12 and horiz and lift_err <= 1e-12 and asym
    return ok, f"max |F(f_i) - 1| = {unit:.1e}, horizontal = {horiz}, lift error {lift_err:.1e}, -f1 != f2 = {asym}"


def sin_wind_lift_geodesic():
    scene = scenario("sin_wind_r3")
    t = np.linspace(0.0, 2 * math.pi, 2001)
    X = np.column_stack([t, 0 * t, 3 * t / 8 - np.sin(2 * t) / 16])
    V = np.column_stack([np.ones_like(t), 0 * t, 3 / 8 - np.cos(2 * t) / 8])
    A = np.column_stack([0 * t, 0 * t, np.sin(2 * t) / 4])
    el = float(np.max(np.abs(A - _accel(scene, X, V))))
    speed = float(np.max(np.abs(scene.norm(X, V) - 1.0)))
    h, w = scene.fields(X)
    p = _legendre(h, w, V)
    orth = float(np.max(np.abs(p[:, 1:])))
    ok = el <= 1e-6 and speed <= 1e-8 and orth <= 1e-8
    return ok, f"EL residual {el:.1e} (tol 1e-6), |F - 1| {speed:.1e}, vertical g-products {orth:.1e} (tol 1e-8)"


def cone_attainable(samples=200_000, seed=1):
    scene = scenario("cone_r2")
    system = lifted_fan_system(scene)
    res = 0.05
    att = attainable_set(system, [0, 0], 6.0, 4, samples, CONE_WINDOW, res, seed=seed)
    rep = compare_grid(att, cone_oracle(0.5), 2 * res)
    orb = orbit_set(system, [0, 0], 6.0, 4, samples, CONE_WINDOW, res, seed=seed)
    cov = orb.coverage()
    ok = rep.agreement >= 0.99 and cov >= 0.99
    return ok, f"attainable agreement {rep.agreement:.4f} (fp {rep.false_positive_rate:.4f}, fn {rep.false_negative_rate:.4f}), orbit coverage {cov:.4f} (tol 0.99)"


def torus_coverage(samples=2048, seed=1):
    scene = scenario("torus")
    system = lifted_fan_system(scene)
    grid = attainable_set(system, [0, 0], 40.0, 4, samples, (0.0, 1.0, 0.0, 1.0), 0.02, seed=seed)
    cov = grid.coverage()
    return cov >= 0.99, f"attainable coverage {cov:.4f} at res 0.02 (tol 0.99)"


def chow_consistency(seed=SEED):
    rng = np.random.default_rng(seed)
    system = lifted_fan_system(scenario("cone_r2"))
    pts = rng.uniform(-2, 2, size=(100, 2))
    ranks = [lie_rank(system.generators, x, 2) for x in pts]
    euclid = scenario("euclidean", dim=2)
    single = ControlSystem(euclid, [VectorField.const([1.0, 0.0], "e1")])
    one = lie_rank(single.generators, np.zeros(2), 5)
    orb = orbit_set(single, [0.0, 0.0], 6.0, 4, 2048, (-2.0, 2.0, -1.0, 1.0), 0.05, seed=1)
    rows = np.unique(np.nonzero(orb.occupancy)[1])
    ok = all(r == 2 for r in ranks) and one == 1 and rows.size == 1
    return ok, f"cone ranks {min(ranks)}..{max(ranks)} (want 2), single-field rank {one}, orbit band rows {rows.size} (want 1)"


def symplectic_conservation(count=50, seed=SEED):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 5))
        tr = random_triple(rng, n, bound=2.0, domain=(0.0, 10.0))
        J1 = solve_jacobi(tr, rng.normal(size=2 * n), 1e-3)
        J2 = solve_jacobi(tr, rng.normal(size=2 * n), 1e-3)
        om = omega_series(J1, J2)
        worst = max(worst, float(np.max(np.abs(om - om[0]))))
    return worst <= 1e-8, f"max |ω(t) - ω(0)| = {worst:.2e} over {count} triples (tol 1e-8)"


def _regular_times(L, count, margin=0.1):
    a, b = L.triple.domain
    sing = singular_instants(L)
    out = []
    for t in np.linspace(a + margin, b - margin, 20 * count):
        if all(abs(t - s) >= margin for s in sing):
            out.append(float(t))
    idx = np.linspace(0, len(out) - 1, count).round().astype(int)
    return [out[i] for i in idx]


def riccati():
    worst = 0.0
    for name in ("flat", "sphere"):
        tr = catalog(name, n=2, domain=(0.0, 10.0))
        for basis in ([[0, 0, 1, 0], [0, 0, 0, 1]], [[1, 0, 0, 0], [0, 1, 0, 0]]):
            L = Subspace(basis, tr)
            for t in _regular_times(L, 20):
                worst = max(worst, riccati_residual(tr, L, t))
    flat1 = catalog("flat", n=1, domain=(0.0, 10.0))
    S1 = float(riccati_operator(flat1, Subspace([[0, 1]], flat1), 1.0)[0, 0])
    ok = worst <= 1e-6 and abs(S1 - 1) <= 1e-8
    return ok, f"max Riccati residual {worst:.1e} (tol 1e-6), flat S(1) - 1 = {S1 - 1:.1e} (tol 1e-8)"


def transverse_curvature_four(seed=SEED):
    tr = catalog("hopf", domain=(0.0, 2 * math.pi))
    line = hopf_line(tr)
    tt = transverse_triple(tr, line)
    ts = np.linspace(0.0, 2 * math.pi, 4001)
    dev = float(np.max(np.abs(tt.R(ts)[:, 0, 0] - 4.0)))
    rng = np.random.default_rng(seed)
    c = line.basis @ _omega_matrix(2)
    _, _, Vh = np.linalg.svd(c)
    comp = Vh[1:]  # symplectic complement of the line
    fields = [rng.normal(size=comp.shape[0]) @ comp for _ in range(4)]
    iso = symplectic_isomorphism_check(tt, fields)
    ok = tt.n == 1 and dev <= 1e-6 and iso <= 1e-7
    return ok, f"max |R~ - 4| = {dev:.1e} (tol 1e-6), symplectic isomorphism error {iso:.1e} (tol 1e-7)"


def wilking():
    mixed = catalog("mixed")
    w = wilking_decompose(mixed, Subspace([[0, 0, 1, 0], [0, 1, 0, 0]], mixed))
    d = w.diagnostics
    sphere = catalog("sphere", n=2)
    ws = wilking_decompose(sphere, Subspace([[0, 0, 1, 0], [0, 0, 0, 1]], sphere))
    flat = catalog("flat", n=2)
    wf = wilking_decompose(flat, Subspace([[1, 0, 0, 0], [0, 1, 0, 0]], flat))
    neg = catalog({"diag": [1.0, -1.0]})
    try:
        wilking_decompose(neg, Subspace([[0, 0, 1, 0], [0, 0, 0, 1]], neg))
        rejected = False
    except PreconditionError:
        rejected = True
    ok = (
        w.dims == (1, 1)
        and d["reconstruction_error"] <= 1e-8
        and d["curvature_residual"] <= 1e-8
        and d["a_tensor_residual"] <= 1e-8
        and ws.dims == (2, 0)
        and wf.dims == (0, 2)
        and rejected
    )
    return ok, (
        f"mixed {w.dims}, reconstruction {d['reconstruction_error']:.1e}, ‖R_H‖ {d['curvature_residual']:.1e}, "
        f"‖A‖ {d['a_tensor_residual']:.1e}; sphere {ws.dims}; flat {wf.dims}; indefinite rejected = {rejected}"
    )


LIOUVILLE_CASES = {
    "euclidean": ([0.3, -0.2], [0.6, 0.8]),
    "cone_r2": ([0.0, 0.0], [0.7, 0.4]),
    "sphere2": ([math.pi / 2, 0.0], [0.3, 0.9]),
}


def liouville():
    ratios = {}
    for name, (x, v) in LIOUVILLE_CASES.items():
        ratios[name] = liouville_volume_check(scenario(name), PhaseState(x, v), 5.0)
    worst = max(abs(r - 1) for r in ratios.values())
    text = ", ".join(f"{k} {v:.8f}" for k, v in ratios.items())
    return worst <= 1e-4, f"volume ratios {text} (tol 1e-4)"


def curvature():
    K = {
        "sphere2": flag_curvature(scenario("sphere2"), PhaseState([math.pi / 2, 0.0], [0.0, 1.0]), [1.0, 0.0]),
        "euclidean": flag_curvature(scenario("euclidean", dim=2), PhaseState([0.0, 0.0], [1.0, 0.0]), [0.0, 1.0]),
        "cone_r2": flag_curvature(scenario("cone_r2"), PhaseState([0.0, 0.0], [1.0, 0.5]), [0.0, 1.0]),
    }
    ok = abs(K["sphere2"] - 1) <= 1e-2 and abs(K["euclidean"]) <= 1e-3 and abs(K["cone_r2"]) <= 1e-3
    return ok, ", ".join(f"K[{k}] = {v:.6f}" for k, v in K.items()) + " (tol 1e-2 / 1e-3)"


def asymmetric_length():
    scene = scenario("cone_r2")
    t = np.linspace(0.0, 1.0, 101)
    up = Trajectory(t, np.column_stack([0 * t, t]), np.column_stack([0 * t, 1 + 0 * t]), scene)
    down = Trajectory(t, np.column_stack([0 * t, 1 - t]), np.column_stack([0 * t, -1 + 0 * t]), scene)
    l_up, l_down = curve_length(scene, up), curve_length(scene, down)
    ok = abs(l_up - 2 / 3) <= 1e-10 and abs(l_down - 2) <= 1e-10
    return ok, f"l(up) = {l_up:.12f} (2/3), l(down) = {l_down:.12f} (2)"


CRITERIA = (
    Criterion(1, "Randers intrinsic equation", 1.0, randers_equation),
    Criterion(2, "cone control fields are unit and horizontal", 1.0, cone_fields),
    Criterion(3, "horizontal geodesic in the sin^2 wind", 5.0, sin_wind_lift_geodesic),
    Criterion(4, "cone attainable set and orbit", 60.0, cone_attainable),
    Criterion(5, "torus coverage", 60.0, torus_coverage),
    Criterion(6, "Lie rank and single-field band", 5.0, chow_consistency),
    Criterion(7, "symplectic form conservation", 30.0, symplectic_conservation),
    Criterion(8, "Riccati equation", 5.0, riccati),
    Criterion(9, "transverse curvature 4", 10.0, transverse_curvature_four),
    Criterion(10, "Wilking decomposition", 10.0, wilking),
    Criterion(11, "Liouville volume", 30.0, liouville),
    Criterion(12, "flag curvature estimator", 30.0, curvature),
    Criterion(13, "asymmetric length", 1.0, asymmetric_length),
)


def run_criterion(c: Criterion) -> Outcome:
    start = time.perf_counter()
    try:
        passed, detail = c.check()
    except Exception as exc:  # a crash is reported as a failure of that criterion
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    return Outcome(c.number, c.title, bool(passed), detail, time.perf_counter() - start, c.budget)


def run_suite(numbers=None, echo=None):
    """Run the criteria (all, or the given numbers); ``echo`` receives each line."""
    out = []
    for c in CRITERIA:
        if numbers is not None and c.number not in numbers:
            continue
        o = run_criterion(c)
        if echo is not None:
            echo(o.line())
        out.append(o)
    return out
