"""Command-line scenario runner.

    chtype run <config.json>      execute one scenario (or a batch) and write artifacts
    chtype compare <a> <b>        column-wise differences of two trajectory CSVs
    chtype schema <kind>          print the parameter schema of a scenario kind

Exit codes: 0 success, 2 invalid input or schema mismatch, 3 a scenario that
demanded completion stopped early. The output root defaults to the current
directory and can be moved with the ``CHTYPE_OUTPUT_ROOT`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import mpmath
import numpy as np
import scipy

from chtype import __version__, io, peakon, spectral, verify
from chtype.operators import Field, invert_neg_A2n, make_grid
from chtype.pde import SimConfig, classify_initial_data, m_from_u, pde_rhs, solve

EXIT_OK, EXIT_INVALID, EXIT_INCOMPLETE = 0, 2, 3
OUTPUT_ROOT_ENV = "CHTYPE_OUTPUT_ROOT"


class ScenarioError(Exception):
    """Bad input detected before or while running; maps to exit code 2."""


class Incomplete(Exception):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# --- schemas -------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_span = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_GRID = {"type": "object", "required": ["L", "N"], "additionalProperties": False,
         "properties": {"L": _pos, "N": {"type": "integer", "minimum": 8, "multipleOf": 2}}}

_TERM = {"type": "object", "required": ["shape", "amplitude"], "additionalProperties": False,
         "properties": {"shape": {"enum": ["gaussian", "sech2", "pseudo_peakon"]},
                        "amplitude": _num, "center": _num, "width": _pos}}

_INITIAL = {"type": "object", "required": ["terms"], "additionalProperties": False,
            "properties": {"variable": {"enum": ["u", "m"]}, "background": _num,
                           "terms": {"type": "array", "items": _TERM}}}

_COMMON = {"kind": {"type": "string"}, "output": {"type": "string"},
           "seed": {"type": "integer"}, "description": {"type": "string"}}

SCHEMAS = {
    "peakon": {
        "type": "object", "required": ["kind", "t"], "additionalProperties": False,
        "properties": {**_COMMON, "kind": {"const": "peakon"}, "t": _span, "dt": _pos,
                       "tol": _pos, "N": {"type": "integer", "minimum": 1},
                       "A": _num, "c": _num, "q0": _vec, "p0": _vec,
                       "from_spectral": {"type": "object", "required": ["lambdas", "a0s"],
                                         "additionalProperties": False,
                                         "properties": {"lambdas": _vec, "a0s": _vec}}},
    },
    "spectral": {
        "type": "object", "required": ["kind", "lambdas", "a0s", "t"],
        "additionalProperties": False,
        "properties": {**_COMMON, "kind": {"const": "spectral"}, "lambdas": _vec,
                       "a0s": _vec, "t": _span, "dt": _pos,
                       "precision": {"enum": ["auto", "double", "extended"]}},
    },
    "pde": {
        "type": "object", "required": ["kind", "grid", "initial", "t_end"],
        "additionalProperties": False,
        "properties": {**_COMMON, "kind": {"const": "pde"}, "grid": _GRID, "initial": _INITIAL,
                       "n": {"type": "integer", "minimum": 1}, "t_end": _pos, "rtol": _pos,
                       "atol": _pos, "monitor_dt": _pos, "dealias": {"type": "boolean"},
                       "blowup_threshold": _pos, "m_norm_growth_cap": _pos,
                       "require_completion": {"type": "boolean"},
                       "snapshot_every": {"type": "integer", "minimum": 1}},
    },
    "verify": {
        "type": "object", "required": ["kind", "grid", "initial", "t_end"],
        "additionalProperties": False,
        "properties": {**_COMMON, "kind": {"const": "verify"}, "grid": _GRID,
                       "initial": _INITIAL, "n": {"type": "integer", "minimum": 1},
                       "t_end": _pos, "rtol": _pos, "atol": _pos,
                       "spacings": {"type": "array", "items": _pos, "minItems": 1},
                       "lambdas": _vec,
                       "corpus_size": {"type": "integer", "minimum": 0},
                       "densities": {"type": "array", "items": {"enum": list(verify.DENSITIES)}}},
    },
    "classify": {
        "type": "object", "required": ["kind", "grid", "initial"], "additionalProperties": False,
        "properties": {**_COMMON, "kind": {"const": "classify"}, "grid": _GRID,
                       "initial": _INITIAL, "n": {"type": "integer", "minimum": 1}},
    },
}

BATCH_SCHEMA = {
    "type": "object", "required": ["scenarios"], "additionalProperties": False,
    "properties": {"scenarios": {"type": "array", "items": {"type": "object"}, "minItems": 1},
                   "workers": {"type": "integer", "minimum": 1},
                   "output": {"type": "string"}},
}


def validate(config: dict) -> None:
    if not isinstance(config, dict):
        raise ScenarioError("config must be a JSON object")
    kind = config.get("kind")
    if kind not in SCHEMAS:
        raise ScenarioError(f"unknown scenario kind {kind!r}; expected one of {sorted(SCHEMAS)}")
    try:
        jsonschema.validate(config, SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None


# --- shared builders -----------------------------------------------------------------


def _shape(name, xi):
    if name == "gaussian":
        return np.exp(-xi ** 2)
    if name == "sech2":
        return 1.0 / np.cosh(xi) ** 2
    return peakon.pseudo_peakon_profile(xi)


def build_initial(spec: dict, grid, n: int):
    """Return ``(u0, m0)`` for an ``initial`` block."""
    x = grid.x
    values = np.full(grid.N, float(spec.get("background", 0.0)))
    for term in spec["terms"]:
        xi = (x - term.get("center", 0.0)) / term.get("width", 1.0)
        values = values + term["amplitude"] * _shape(term["shape"], xi)
    f = Field(grid, values)
    if spec.get("variable", "u") == "u":
        return f, m_from_u(f, n)
    return invert_neg_A2n(f, n), f


def _grid(cfg):
    return make_grid(cfg["grid"]["L"], cfg["grid"]["N"])


def _output_times(span, dt):
    t0, t1 = span
    if not t1 > t0:
        raise ScenarioError("time span must be increasing")
    if dt is None:
        return np.array([t0, t1])
    count = int(np.floor((t1 - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(count + 1)
    if abs(times[-1] - t1) > 1e-12 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    else:
        times[-1] = t1
    return times


def _trajectory_rows(states):
    rows = []
    for s in states:
        rows.append([s.t, *s.q, *s.p, peakon.hamiltonian(s), peakon.total_momentum(s)])
    return rows


# --- scenario runners ------------------------------------------------------------------
# Each returns (report dict, list of written artifact paths).


def run_peakon(cfg, out: Path):
    times = _output_times(cfg["t"], cfg.get("dt"))
    t0 = float(times[0])
    tol = cfg.get("tol", 1e-12)
    oracle = None
    if "from_spectral" in cfg:
        d = spectral.SpectralData(cfg["from_spectral"]["lambdas"], cfg["from_spectral"]["a0s"])
        s0 = spectral.peakon_state_from_spectral(d, t0)
        oracle_name = "spectral"
        oracle = lambda t: spectral.peakon_state_from_spectral(d, t)
    elif "A" in cfg:
        if cfg.get("N", 2) != 2:
            raise ScenarioError("the closed-form amplitude A applies to N = 2 only")
        A = cfg["A"]
        try:
            s0 = peakon.two_peakon_exact(A, t0)
        except peakon.SingularTimeError as exc:
            raise ScenarioError(str(exc)) from None
        oracle_name = "two_peakon_closed_form"
        oracle = lambda t: peakon.two_peakon_exact(A, t)
    elif "c" in cfg:
        q0 = cfg.get("q0", [0.0])
        if len(q0) != 1:
            raise ScenarioError("single pseudo-peakon takes one position")
        s0 = peakon.PeakonState(t0, q0, [cfg["c"]])
        oracle_name = "single_pseudo_peakon"
        oracle = lambda t: peakon.PeakonState(t, [q0[0] + cfg["c"] * (t - t0)], [cfg["c"]])
    elif "q0" in cfg and "p0" in cfg:
        if len(cfg["q0"]) != len(cfg["p0"]):
            raise ScenarioError("q0 and p0 must have the same length")
        s0 = peakon.PeakonState(t0, cfg["q0"], cfg["p0"])
        oracle_name = None
    else:
        raise ScenarioError("peakon scenario needs one of A, c, q0/p0 or from_spectral")
    if "N" in cfg and cfg["N"] != s0.N:
        raise ScenarioError(f"N = {cfg['N']} does not match the initial state ({s0.N})")

    traj = peakon.integrate(s0, float(times[-1]), tol, monitor_times=times)
    states = traj.states
    header = io.trajectory_header(s0.N)
    path = io.write_csv(out / "trajectory.csv", header, _trajectory_rows(states))
    H = np.array([peakon.hamiltonian(s) for s in states])
    P = np.array([peakon.total_momentum(s) for s in states])
    report = {
        "kind": "peakon", "N": s0.N, "collided": traj.collided, "stats": traj.stats.as_dict(),
        "t_final": states[-1].t,
        "hamiltonian_drift": float(np.max(np.abs(H - H[0]))),
        "momentum_drift": float(np.max(np.abs(P - P[0]))),
    }
    artifacts = [path]
    if oracle is not None:
        ref = [oracle(s.t) for s in states]
        err = max(max(np.max(np.abs(s.q - r.q)), np.max(np.abs(s.p - r.p)))
                  for s, r in zip(states, ref))
        report["oracle"] = {"name": oracle_name, "max_error": float(err)}
        artifacts.append(io.write_csv(out / "oracle.csv", header, _trajectory_rows(ref)))
    return report, artifacts


def run_spectral(cfg, out: Path):
    try:
        d = spectral.SpectralData(cfg["lambdas"], cfg["a0s"])
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    times = _output_times(cfg["t"], cfg.get("dt"))
    states = spectral.spectral_trajectory(d, times, precision=cfg.get("precision", "auto"))
    path = io.write_csv(out / "trajectory.csv", io.trajectory_header(d.N), _trajectory_rows(states))
    H = np.array([peakon.hamiltonian(s) for s in states])
    report = {"kind": "spectral", "N": d.N, "t_final": float(times[-1]),
              "hamiltonian_drift": float(np.max(np.abs(H - H[0]))),
              "asymptotic_momenta": (-1.0 / d.lambdas).tolist()}
    return report, [path]


def _sim_config(cfg, grid):
    keys = ("n", "rtol", "atol", "monitor_dt", "dealias", "blowup_threshold", "m_norm_growth_cap")
    kw = {k: cfg[k] for k in keys if k in cfg}
    try:
        return SimConfig(grid=grid, t_end=cfg["t_end"], **kw)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _snapshot_rows(sol, i):
    g = sol.grid
    return np.column_stack([g.x, sol.m(i).values, sol.u(i).values, sol.v(i).values])


def run_pde(cfg, out: Path):
    grid = _grid(cfg)
    n = cfg.get("n", 2)
    u0, m0 = build_initial(cfg["initial"], grid, n)
    sim = _sim_config(cfg, grid)
    cls = classify_initial_data(u0, n) if n == 2 else None
    sol = solve(m0, sim)
    cols = ["t", "E0_squared", "sup_uxxx", "max_abs_uxxx", "m_L2_squared", "min_m", "max_m",
            "momentum", "resolution_tail"]
    rows = [[getattr(r, c) for c in cols] for r in sol.reports]
    artifacts = [io.write_csv(out / "conserved.csv", cols, rows)]
    every = cfg.get("snapshot_every", max(1, len(sol.times) - 1))
    for i in sorted(set(range(0, len(sol.times), every)) | {len(sol.times) - 1}):
        artifacts.append(io.write_csv(out / f"snapshot_{i:05d}.csv", ["x", "m", "u", "v"],
                                      _snapshot_rows(sol, i)))
    E = np.array([r.E0_squared for r in sol.reports])
    observed = "completed" if sol.termination == "reached_t_end" else sol.termination
    report = {
        "kind": "pde", "n": n, "termination": sol.termination, "message": sol.message,
        "observed": observed, "t_final": float(sol.times[-1]), "stats": sol.stats.as_dict(),
        "E0_squared_relative_drift": float(np.max(np.abs(E - E[0])) / E[0]) if E[0] else 0.0,
        "collision_of_sign": any(r.collision_of_sign for r in sol.reports),
        "predicted": cls.prediction if cls else "not_classified",
        "classification": cls.as_dict() if cls else None,
        "snapshot_times": sol.times,
    }
    if cfg.get("require_completion") and sol.termination != "reached_t_end":
        raise Incomplete(f"run stopped early: {sol.termination} {sol.message}",
                         (report, artifacts))
    return report, artifacts


def _random_bandlimited(grid, rng, modes=12):
    c = np.zeros(grid.k.size, dtype=complex)
    c[1:modes + 1] = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    c[1:modes + 1] /= np.arange(1, modes + 1) ** 2
    return Field(grid, np.fft.irfft(c, n=grid.N) * grid.N / modes)


def formulation_deltas(grid, n, count, seed):
    """Relative differences between the three right-hand-side formulations."""
    rng = np.random.default_rng(seed)
    ham, eul = [], []
    for _ in range(count):
        u = _random_bandlimited(grid, rng)
        m = m_from_u(u, n)
        r = pde_rhs(m, n, dealias=False)
        scale = np.max(np.abs(r.values))
        ham.append(np.max(np.abs(verify.hamiltonian_form_rhs(u, n).values - r.values)) / scale)
        ut = invert_neg_A2n(r, n).values
        eul.append(np.max(np.abs(verify.euler_form_rhs(u, n).values - ut)) / np.max(np.abs(ut)))
    return {"hamiltonian_max_relative": float(max(ham, default=0.0)),
            "euler_max_relative": float(max(eul, default=0.0)), "count": count}


def run_verify(cfg, out: Path):
    grid = _grid(cfg)
    n = cfg.get("n", 2)
    u0, m0 = build_initial(cfg["initial"], grid, n)
    t_end = cfg["t_end"]
    t_mid = 0.5 * t_end
    lambdas = cfg.get("lambdas", [0.5, 1.0, 2.0])
    rows, cl_rows = [], []
    last = None
    for dt in cfg.get("spacings", [t_end / 8, t_end / 16, t_end / 32]):
        if abs(t_mid / dt - round(t_mid / dt)) > 1e-9:
            raise ScenarioError(f"snapshot spacing {dt} does not divide t_end / 2")
        sim = SimConfig(grid=grid, t_end=t_end, n=n, rtol=cfg.get("rtol", 1e-12),
                        atol=cfg.get("atol", 1e-14), monitor_dt=dt)
        sol = solve(m0, sim)
        if sol.termination != "reached_t_end":
            raise Incomplete(f"verification run stopped early: {sol.termination}",
                             ({"kind": "verify", "termination": sol.termination}, []))
        zc = [float(np.max(verify.zero_curvature_residual(sol, lam, t_mid).values))
              for lam in lambdas]
        cl = [verify.conservation_law_residual(sol, lam, t_mid).residual for lam in lambdas]
        rows.append([dt, *zc])
        cl_rows.append([dt, *cl])
        last = sol
    header = ["spacing"] + [f"lambda_{lam:g}" for lam in lambdas]
    artifacts = [io.write_csv(out / "zero_curvature.csv", header, rows),
                 io.write_csv(out / "conservation_law.csv", header,
                              np.nan_to_num(np.array(cl_rows), nan=np.inf))]
    drifts = {w: verify.density_conservation_check(last, w).as_dict()
              for w in cfg.get("densities", ["H1", "momentum", "gamma_tilde0"])}
    report = {
        "kind": "verify", "n": n, "t": t_mid,
        "zero_curvature": {"spacings": [r[0] for r in rows], "max_residual": [r[1:] for r in rows]},
        "conservation_law": {"spacings": [r[0] for r in cl_rows],
                             "max_residual": [r[1:] for r in cl_rows]},
        "densities": {w: {"max_relative_drift": d["max_relative_drift"],
                          "evaluable": d["evaluable"], "message": d["message"]}
                      for w, d in drifts.items()},
        "formulations": formulation_deltas(make_grid(grid.L, min(grid.N, 256)), n,
                                           cfg.get("corpus_size", 20), cfg.get("seed", 0)),
    }
    return report, artifacts


def run_classify(cfg, out: Path):
    grid = _grid(cfg)
    n = cfg.get("n", 2)
    u0, _ = build_initial(cfg["initial"], grid, n)
    cls = classify_initial_data(u0, n)
    return {"kind": "classify", "classification": cls.as_dict(), "predicted": cls.prediction}, []


RUNNERS = {"peakon": run_peakon, "spectral": run_spectral, "pde": run_pde,
           "verify": run_verify, "classify": run_classify}


# --- orchestration -----------------------------------------------------------------------


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")).resolve()


def _versions():
    return {"chtype": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


def execute(cfg: dict, out: Path) -> int:
    """Run one validated scenario into ``out``; returns an exit code."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status, error = EXIT_OK, None
    try:
        report, artifacts = RUNNERS[cfg["kind"]](cfg, out)
    except ScenarioError as exc:
        shutil.rmtree(out, ignore_errors=True)
        out.mkdir(parents=True, exist_ok=True)
        report, artifacts, status = {"kind": cfg["kind"]}, [], EXIT_INVALID
        error = {"type": "invalid", "message": str(exc)}
    except Incomplete as exc:
        report, artifacts = exc.report
        status = EXIT_INCOMPLETE
        error = {"type": "incomplete", "message": str(exc)}
    report["status"] = "ok" if status == EXIT_OK else "error"
    if error:
        report["error"] = error
    artifacts.append(io.write_json(out / "report.json", report))
    manifest = {
        "config": cfg,
        "versions": _versions(),
        "wall_time_seconds": time.perf_counter() - start,
        "exit_code": status,
        "artifacts": {p.name: io.sha256(p) for p in artifacts},
    }
    io.write_json(out / "manifest.json", manifest)
    return status


def run(config_path, stderr=None) -> int:
    stderr = sys.stderr if stderr is None else stderr
    try:
        cfg = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "invalid", "message": str(exc)}, sort_keys=True), file=stderr)
        return EXIT_INVALID
    root = output_root()
    try:
        if isinstance(cfg, dict) and "scenarios" in cfg:
            jsonschema.validate(cfg, BATCH_SCHEMA)
            for i, sc in enumerate(cfg["scenarios"]):
                validate(sc)
            batch = [(sc, root / cfg.get("output", "out") / sc.get("output", f"{i:03d}_{sc['kind']}"))
                     for i, sc in enumerate(cfg["scenarios"])]
            dirs = [d for _, d in batch]
            if len(set(dirs)) != len(dirs):
                raise ScenarioError("scenario output directories must be distinct")
        else:
            validate(cfg)
            batch = [(cfg, root / cfg.get("output", "out"))]
    except (ScenarioError, jsonschema.ValidationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(json.dumps({"error": "invalid", "message": msg}, sort_keys=True), file=stderr)
        return EXIT_INVALID
    workers = cfg.get("workers", 1) if "scenarios" in cfg else 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(lambda job: execute(*job), batch))
    for (sc, d), code in zip(batch, codes):
        if code != EXIT_OK:
            report = json.loads((d / "report.json").read_text())
            print(json.dumps({"output": str(d), **report.get("error", {})}, sort_keys=True),
                  file=stderr)
    return max(codes)


def _resolve_csv(p) -> Path:
    p = Path(p)
    return p / "trajectory.csv" if p.is_dir() else p


def compare(a, b):
    """Column-wise sup and RMS differences; raises ScenarioError on schema mismatch."""
    try:
        ha, da = io.read_csv(_resolve_csv(a))
        hb, db = io.read_csv(_resolve_csv(b))
    except OSError as exc:
        raise ScenarioError(str(exc)) from None
    if ha != hb:
        raise ScenarioError(f"column mismatch: {ha} vs {hb}")
    if da.shape != db.shape:
        raise ScenarioError(f"row count mismatch: {da.shape[0]} vs {db.shape[0]}")
    if ha and ha[0] == "t" and not np.allclose(da[:, 0], db[:, 0], rtol=1e-12, atol=1e-12):
        raise ScenarioError("time columns differ")
    diff = np.abs(da - db)
    cols = {h: {"sup": float(np.max(diff[:, j])), "rms": float(np.sqrt(np.mean(diff[:, j] ** 2)))}
            for j, h in enumerate(ha)}
    return {"columns": cols, "sup": float(np.max(diff)) if diff.size else 0.0, "rows": da.shape[0]}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chtype", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_cmp = sub.add_parser("compare", help="compare two trajectory CSVs or run directories")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--output", help="also write the diff report to this file")
    p_sch = sub.add_parser("schema", help="print a scenario parameter schema")
    p_sch.add_argument("kind", choices=sorted(SCHEMAS))
    args = parser.parse_args(argv)

    if args.command == "run":
        return run(args.config)
    if args.command == "schema":
        sys.stdout.write(io.dumps(SCHEMAS[args.kind]))
        return EXIT_OK
    try:
        result = compare(args.a, args.b)
    except ScenarioError as exc:
        print(json.dumps({"error": "schema_mismatch", "message": str(exc)}, sort_keys=True),
              file=sys.stderr)
        return EXIT_INVALID
    text = io.dumps(result)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
