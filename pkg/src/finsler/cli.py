"""Command-line front end.

Every flag has a config-file twin: ``--config run.json`` supplies defaults with
the same keys (``--q0`` <-> ``"q0"``), and explicit flags win.  Exit status is
0 on success, 2 for configuration or precondition errors (the message names
the field) and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import acceptance
from .control import attainable_set, compare_grid, cone_oracle, grid_to_csv, grid_to_svg, lie_rank, orbit_set, lifted_fan_system
from .errors import ConfigError, DomainError, NumericError, PreconditionError
from .geodesic import PhaseState, integrate_geodesic, speed_drift, zermelo_geodesic
from .jacobi import (
    catalog,
    classify_subspace,
    singular_instants,
    solve_jacobi,
    subspace_from_json,
    wilking_decompose,
)
from .scene import SCENARIOS, load_scenario, random_points, scenario

DEFAULTS = {
    "geodesic": {"scenario": "sin_wind_r3", "T": 2 * math.pi, "step": 1e-3, "zermelo": False},
    "reach": {"scenario": "cone_r2", "q0": None, "horizon": 6.0, "letters": 4, "samples": 20000,
              "window": None, "res": 0.05, "seed": 0, "threads": None, "axes": "0,1"},
    "lierank": {"scenario": "cone_r2", "depth": 2, "points": 100, "seed": 0},
    "jacobi": {"triple": "sphere", "n": None, "domain": None, "J0": None, "step": 1e-3, "scan_step": 1e-2},
    "check": {"suite": "paper", "only": None},
    "scenario-list": {},
}
DEFAULTS["orbit"] = dict(DEFAULTS["reach"])
INT_FIELDS = {"letters", "samples", "seed", "threads", "depth", "points", "n"}
POSITIVE = {"T", "step", "horizon", "res", "depth", "scan_step", "letters", "threads"}


def _vector(field, text, size=None):
    if text is None:
        return None
    try:
        if isinstance(text, str):
            vals = [float(p) for p in text.replace(" ", "").split(",") if p]
        else:
            vals = [float(p) for p in np.ravel(text)]
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected comma-separated numbers, got {text!r}") from None
    if size is not None and len(vals) != size:
        raise ConfigError(field, f"expected {size} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(field, "values must be finite")
    return np.array(vals)


def _parser():
    p = argparse.ArgumentParser(prog="finsler", description="Randers geometry, geodesics, reachability and Jacobi triples.")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(sp):
        sp.add_argument("--config", default=S, help="JSON file with defaults for any flag")
        sp.add_argument("--scenario-file", dest="scenario_file", default=S, help="JSON scenario override {name, params}")

    g = sub.add_parser("geodesic", help="integrate a geodesic and write its samples", argument_default=S)
    common(g)
    g.add_argument("--scenario")
    g.add_argument("--x0", required=False)
    g.add_argument("--v0", required=False)
    g.add_argument("--T", type=float)
    g.add_argument("--step", type=float)
    g.add_argument("--zermelo", action="store_true", help="use the Killing-wind fast path")
    g.add_argument("--out")
    g.add_argument("--svg")

    for name in ("reach", "orbit"):
        r = sub.add_parser(name, help=f"{'attainable set' if name == 'reach' else 'orbit'} occupancy grid", argument_default=S)
        common(r)
        r.add_argument("--scenario")
        r.add_argument("--q0")
        r.add_argument("--horizon", type=float)
        r.add_argument("--letters", type=int)
        r.add_argument("--samples", type=int)
        r.add_argument("--window", help="xmin,xmax,ymin,ymax")
        r.add_argument("--res", type=float)
        r.add_argument("--seed", type=int)
        r.add_argument("--threads", type=int)
        r.add_argument("--axes", help="chart axes of the grid, e.g. 0,1")
        r.add_argument("--out")
        r.add_argument("--svg")

    lr = sub.add_parser("lierank", help="rank of the control fields and their brackets", argument_default=S)
    common(lr)
    lr.add_argument("--scenario")
    lr.add_argument("--depth", type=int)
    lr.add_argument("--points", type=int)
    lr.add_argument("--x", help="single probe point instead of random points")
    lr.add_argument("--seed", type=int)

    j = sub.add_parser("jacobi", help="solve a Jacobi field of a triple", argument_default=S)
    j.add_argument("--config", default=S)
    j.add_argument("--triple", help="flat, sphere, mixed, hopf, or a JSON file with n/R/domain/basis")
    j.add_argument("--n", type=int)
    j.add_argument("--domain", help="a,b")
    j.add_argument("--J0", help="2n initial values (J, J')")
    j.add_argument("--step", type=float)
    j.add_argument("--scan-step", dest="scan_step", type=float)
    j.add_argument("--out")

    c = sub.add_parser("check", help="run the reproduction suite", argument_default=S)
    c.add_argument("--config", default=S)
    c.add_argument("--suite", choices=["paper"])
    c.add_argument("--only", help="comma-separated criterion numbers")

    sub.add_parser("scenario-list", help="list the registered scenarios")
    return p


def _resolve(args):
    """Merge built-in defaults, the config file and explicit flags (in that order)."""
    cfg = dict(DEFAULTS[args.command])
    given = {k: v for k, v in vars(args).items() if k != "command"}
    path = given.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "the config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key == "command":
                continue
            if key not in cfg and key not in ("out", "svg", "x0", "v0", "x", "scenario_file"):
                raise ConfigError(k, f"unknown key for command {args.command!r}")
            cfg[key] = v
    cfg.update(given)
    for k, v in cfg.items():
        if v is None or isinstance(v, bool):
            continue
        if k in INT_FIELDS:
            try:
                cfg[k] = int(v)
            except (TypeError, ValueError):
                raise ConfigError(k, f"expected an integer, got {v!r}") from None
        if k in POSITIVE and isinstance(cfg[k], (int, float)) and not cfg[k] > 0:
            raise ConfigError(k, f"must be positive, got {cfg[k]!r}")
        if k in ("T", "step", "horizon", "res", "scan_step"):
            try:
                cfg[k] = float(v)
            except (TypeError, ValueError):
                raise ConfigError(k, f"expected a number, got {v!r}") from None
            if not (math.isfinite(cfg[k]) and cfg[k] > 0):
                raise ConfigError(k, f"must be positive, got {v!r}")
    if cfg.get("samples") is not None and cfg["samples"] < 0:
        raise ConfigError("samples", "must be non-negative")
    return cfg


def _scene(cfg):
    if cfg.get("scenario_file"):
        return load_scenario(cfg["scenario_file"])
    try:
        return scenario(cfg["scenario"])
    except DomainError as exc:
        raise ConfigError("scenario", str(exc)) from None


def _default_velocity(scene):
    if scene.name == "sin_wind_r3":
        # the lift of the unit base velocity (1, 0): gamma'(0) = (1, 0, w3(0))
        return np.array([1.0, 0.0, scene.params["offset"]])
    v = np.zeros(scene.dim)
    v[0] = 1.0
    return v


def cmd_geodesic(cfg, out):
    scene = _scene(cfg)
    x0 = _vector("x0", cfg.get("x0"), scene.dim)
    x0 = np.zeros(scene.dim) if x0 is None else x0
    v0 = _vector("v0", cfg.get("v0"), scene.dim)
    v0 = _default_velocity(scene) if v0 is None else v0
    try:
        s0 = PhaseState(x0, v0)
    except DomainError as exc:
        raise ConfigError("v0", str(exc)) from None
    if cfg["zermelo"]:
        traj = zermelo_geodesic(scene, s0, cfg["T"], cfg["step"])
    else:
        traj = integrate_geodesic(scene, s0, cfg["T"], cfg["step"])
    files = []
    if cfg.get("out"):
        traj.to_csv(cfg["out"])
        files.append(cfg["out"])
    if cfg.get("svg"):
        trajectory_svg(traj, cfg["svg"], scene)
        files.append(cfg["svg"])
    end = ",".join(f"{c:.6g}" for c in traj.x[-1])
    trunc = " (truncated at chart boundary)" if traj.truncated else ""
    out(f"geodesic {scene.name}: {len(traj)} samples, end ({end}), speed drift {speed_drift(traj):.2e}{trunc}"
        + (f" -> {', '.join(files)}" if files else ""))
    return 0


def trajectory_svg(traj, path, scene=None, size=600.0):
    """2-D projection (first two chart coordinates) with the base geodesic overlaid."""
    P = traj.x[:, :2] if traj.x.shape[1] >= 2 else np.column_stack([traj.x[:, 0], traj.times])
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = float(max(np.max(hi - lo), 1e-9))
    lo = lo - 0.05 * span
    scale = size / (1.1 * span)
    H = size

    def pts(Q):
        return " ".join(f"{(q[0] - lo[0]) * scale:.2f},{H - (q[1] - lo[1]) * scale:.2f}" for q in Q)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}">',
             f'<rect width="{size:.0f}" height="{size:.0f}" fill="white"/>']
    sub = scene.submersion if scene is not None else None
    if sub is not None and sub.base_dim == 2 and traj.x.shape[1] >= 2:
        # base geodesics of the flat registry bases are straight lines
        base = traj.x[0, :2] + traj.times[:, None] * traj.v[0, :2]
        parts.append(f'<polyline points="{pts(base)}" fill="none" stroke="#cc0000" stroke-dasharray="6,4"/>')
    parts.append(f'<polyline points="{pts(P)}" fill="none" stroke="#204a87" stroke-width="2"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def cmd_reach(cfg, out, orbit=False):
    scene = _scene(cfg)
    try:
        system = lifted_fan_system(scene)
    except PreconditionError as exc:
        raise ConfigError("scenario", str(exc)) from None
    q0 = _vector("q0", cfg.get("q0"), scene.dim)
    q0 = np.zeros(scene.dim) if q0 is None else q0
    axes = tuple(int(a) for a in _vector("axes", cfg["axes"], 2))
    if any(a < 0 or a >= scene.dim for a in axes) or axes[0] == axes[1]:
        raise ConfigError("axes", f"need two distinct chart axes below {scene.dim}")
    window = _vector("window", cfg.get("window"), 4)
    if window is None:
        if scene.periods is not None:
            window = np.array([0.0, scene.periods[axes[0]], 0.0, scene.periods[axes[1]]])
        else:
            window = np.array([-2.0, 2.0, -2.0, 2.0])
    if not (window[0] < window[1] and window[2] < window[3]):
        raise ConfigError("window", "need xmin < xmax and ymin < ymax")
    fn = orbit_set if orbit else attainable_set
    grid = fn(system, q0, cfg["horizon"], cfg["letters"], cfg["samples"], tuple(window), cfg["res"],
              seed=cfg["seed"], threads=cfg.get("threads"), axes=axes)
    files = []
    if cfg.get("out"):
        grid_to_csv(grid, cfg["out"])
        files.append(cfg["out"])
    cone = scene.name == "cone_r2"
    if cfg.get("svg"):
        grid_to_svg(grid, cfg["svg"], cone_wind=scene.params["wind"] if cone else None)
        files.append(cfg["svg"])
    line = f"{'orbit' if orbit else 'reach'} {scene.name}: coverage {grid.coverage():.4f} of {grid.counts.size} cells"
    if cone and not orbit:
        rep = compare_grid(grid, cone_oracle(scene.params["wind"]), 2 * cfg["res"])
        line += f", cone agreement {rep.agreement:.4f}"
    out(line + (f" -> {', '.join(files)}" if files else ""))
    return 0


def cmd_lierank(cfg, out):
    scene = _scene(cfg)
    try:
        system = lifted_fan_system(scene)
    except PreconditionError as exc:
        raise ConfigError("scenario", str(exc)) from None
    x = _vector("x", cfg.get("x"), scene.dim)
    if x is not None:
        pts = x[None, :]
    else:
        pts = random_points(scene, cfg["points"], np.random.default_rng(cfg["seed"]))
    ranks = [lie_rank(system.generators, p, cfg["depth"]) for p in pts]
    out(f"lierank {scene.name}: rank {min(ranks)}..{max(ranks)} at {len(ranks)} points (depth {cfg['depth']}, dim {scene.dim})")
    return 0


def cmd_jacobi(cfg, out):
    name = cfg["triple"]
    domain = _vector("domain", cfg.get("domain"), 2)
    S = None
    if isinstance(name, str) and name.endswith(".json"):
        try:
            with open(name) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("triple", f"cannot read {name}: {exc}") from None
        if domain is not None:
            data["domain"] = domain.tolist()
        try:
            S = subspace_from_json(data)
        except (DomainError, KeyError) as exc:
            raise ConfigError("triple", str(exc)) from None
        triple = S.triple
    else:
        try:
            triple = catalog(name, cfg.get("n"), tuple(domain) if domain is not None else (0.0, 10 * math.pi))
        except DomainError as exc:
            raise ConfigError("triple", str(exc)) from None
    n = triple.n
    J0 = _vector("J0", cfg.get("J0"), 2 * n)
    if J0 is None:
        J0 = S.basis[0] if S is not None and S.dim else np.concatenate([np.zeros(n), np.eye(n)[0]])
    field = solve_jacobi(triple, J0, cfg["step"])
    parts = [f"jacobi {triple.name} (n={n}, domain [{triple.domain[0]:g}, {triple.domain[1]:g}])",
             f"residual {field.residual():.2e}"]
    if S is not None and S.dim:
        c = classify_subspace(triple, S, 1e-8)
        parts.append(f"subspace dim {S.dim} isotropic={c.isotropic} lagrangian={c.lagrangian}")
        if c.isotropic:
            sing = singular_instants(S, cfg["scan_step"])
            parts.append(f"{len(sing)} singular instants")
        if c.lagrangian:
            try:
                w = wilking_decompose(triple, S, cfg["scan_step"])
                parts.append(f"Wilking dims {w.dims}")
            except PreconditionError as exc:
                parts.append(f"Wilking not applicable ({exc})")
    if cfg.get("out"):
        field.to_csv(cfg["out"])
        parts.append(f"-> {cfg['out']}")
    out(", ".join(parts))
    return 0


def cmd_check(cfg, out):
    only = None
    if cfg.get("only"):
        only = {int(v) for v in _vector("only", cfg["only"])}
    results = acceptance.run_suite(only, echo=out)
    passed = sum(o.ok for o in results)
    total = sum(o.seconds for o in results)
    out(f"check {cfg['suite']}: {passed}/{len(results)} criteria passed in {total:.1f} s")
    return 0 if passed == len(results) else 1


def cmd_scenarios(out):
    for name in SCENARIOS:
        s = scenario(name)
        extra = f", submersion onto R^{s.submersion.base_dim}" if s.submersion else ""
        out(f"{name}: dim {s.dim}, {s.topology}{extra}, params {json.dumps(s.params)}")
    return 0


VECTOR_FLAGS = {"--x0", "--v0", "--q0", "--window", "--x", "--domain", "--J0", "--axes"}


def _join_vectors(argv):
    """Glue vector flags to their value so that ``--window -2,2,...`` parses."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in VECTOR_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None, out=print):
    parser = _parser()
    args = parser.parse_args(_join_vectors(list(sys.argv[1:] if argv is None else argv)))
    try:
        if args.command == "scenario-list":
            return cmd_scenarios(out)
        cfg = _resolve(args)
        if args.command == "geodesic":
            return cmd_geodesic(cfg, out)
        if args.command in ("reach", "orbit"):
            return cmd_reach(cfg, out, orbit=args.command == "orbit")
        if args.command == "lierank":
            return cmd_lierank(cfg, out)
        if args.command == "jacobi":
            return cmd_jacobi(cfg, out)
        return cmd_check(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
