"""Command-line front end: ``plap <subcommand> --config run.json --out dir``.

Configuration is JSON::

    {"domain": "interval(0,1)", "resolution": 512, "p": 2,
     "reaction": {"preset": "paper_singular", "params": {"gamma": 0.5}},
     "schedule": {"n_start": 2, "n_end": 64, "geometric": true},
     "tolerances": {"eigen": 1e-9, "minimize": 1e-9, "cauchy": 1e-5,
                    "inclusion": 1e-2, "inclusion_fraction": 0.99},
     "seed": 0}

``sweep`` additionally reads ``"grid": {"reaction.params.gamma": [0.3, 0.5]}``.
Exit status: 0 when every requested check passes, 1 on a failed check or a
pipeline error (a ``FAILED`` marker is left in the output directory), 2 on an
invalid configuration.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigen import first_eigenpair
from .mesh import FeFunction, Mesh, build_mesh, read_mesh, write_mesh
from .reaction import Reaction, check_hypotheses, preset
from .solver import build_subsolution, continuation
from .verify import verify_run

log = logging.getLogger("plap")

DEFAULT_TOLERANCES = {
    "eigen": 1e-9,
    "minimize": 1e-9,
    "cauchy": 1e-5,
    "inclusion": 1e-2,
    "inclusion_fraction": 0.99,
    "subsolution": 1e-8,
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# {{{ configuration


@dataclass
class RunConfig:
    domain: str = "interval(0,1)"
    resolution: int = 128
    p: float = 2.0
    reaction: object = "paper_singular"
    schedule: dict = field(default_factory=lambda: {"n_start": 2, "n_end": 64, "geometric": True})
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    out: str = "plap-out"
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain, "resolution": self.resolution, "p": self.p,
            "reaction": self.reaction, "schedule": self.schedule,
            "tolerances": self.tolerances, "seed": self.seed, "grid": self.grid,
        }


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"invalid config field '{name}': {msg}")


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document."""
    _require(isinstance(doc, dict), "<root>", "expected a JSON object")
    known = {"domain", "resolution", "p", "reaction", "schedule", "tolerances",
             "seed", "out", "grid"}
    extra = set(doc) - known
    _require(not extra, sorted(extra)[0] if extra else "", "unknown field")
    cfg = RunConfig()
    if "domain" in doc:
        cfg.domain = doc["domain"]
        try:
            build_mesh(cfg.domain, 2)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid config field 'domain': {exc}") from None
    if "resolution" in doc:
        res = doc["resolution"]
        _require(isinstance(res, int) and not isinstance(res, bool) and res >= 2,
                 "resolution", "must be an integer >= 2")
        cfg.resolution = res
    if "p" in doc:
        p = doc["p"]
        _require(isinstance(p, (int, float)) and not isinstance(p, bool) and p > 1
                 and math.isfinite(p), "p", "must be a real number > 1")
        cfg.p = float(p)
    if "reaction" in doc:
        cfg.reaction = doc["reaction"]
        try:
            _load_reaction(cfg.reaction, lambda1=1.0)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError, SyntaxError) as exc:
            raise ConfigError(f"invalid config field 'reaction': {exc}") from None
    if "schedule" in doc:
        sch = doc["schedule"]
        _require(isinstance(sch, dict), "schedule", "must be an object")
        n0, n1 = sch.get("n_start", 2), sch.get("n_end", 64)
        _require(isinstance(n0, int) and n0 >= 2, "schedule.n_start", "must be an integer >= 2")
        _require(isinstance(n1, int) and n1 >= n0, "schedule.n_end", "must be an integer >= n_start")
        cfg.schedule = {"n_start": n0, "n_end": n1, "geometric": bool(sch.get("geometric", True))}
    if "tolerances" in doc:
        tols = doc["tolerances"]
        _require(isinstance(tols, dict), "tolerances", "must be an object")
        for k, v in tols.items():
            _require(k in DEFAULT_TOLERANCES, f"tolerances.{k}", "unknown tolerance")
            _require(isinstance(v, (int, float)) and v > 0, f"tolerances.{k}", "must be positive")
            cfg.tolerances[k] = float(v)
    if "seed" in doc:
        _require(isinstance(doc["seed"], int), "seed", "must be an integer")
        cfg.seed = doc["seed"]
    if "out" in doc:
        cfg.out = str(doc["out"])
    if "grid" in doc:
        _require(isinstance(doc["grid"], dict) and all(
            isinstance(v, list) and v for v in doc["grid"].values()), "grid",
            "must map parameter paths to nonempty lists")
        cfg.grid = doc["grid"]
    return cfg


def _load_reaction(spec, lambda1: float) -> Reaction:
    if isinstance(spec, str):
        return preset(spec)
    if not isinstance(spec, dict):
        raise ConfigError("invalid config field 'reaction': expected a preset name or object")
    if "preset" in spec:
        params = {
            k: (lambda1 if v == "lambda1" else v) for k, v in spec.get("params", {}).items()
        }
        gamma = params.get("gamma")
        if gamma is not None and not 0 < float(gamma) < 1:
            raise ConfigError("invalid config field 'reaction.params.gamma': must lie in (0,1)")
        return preset(spec["preset"], **params)
    return Reaction.from_dict(spec)


# }}}


# {{{ output helpers


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _node_rows(mesh: Mesh, *fields: np.ndarray):
    for i in range(mesh.n_nodes):
        yield [*mesh.nodes[i], *(f[i] for f in fields)]


def _coord_names(mesh: Mesh) -> list[str]:
    return ["x", "y"][: mesh.dim]


# }}}


# {{{ subcommands


def cmd_eigen(cfg: RunConfig, out: Path) -> int:
    mesh = build_mesh(cfg.domain, cfg.resolution)
    eig = first_eigenpair(mesh, cfg.p, cfg.tolerances["eigen"])
    _write_csv(out / "eigen.csv", ["p", "h", "lambda1", "residual", "iterations"],
               [[cfg.p, mesh.h, eig.lambda1, eig.residual, eig.iterations]])
    _write_csv(out / "phi1.csv", _coord_names(mesh) + ["phi1"], _node_rows(mesh, eig.phi1.values))
    _write_json(out / "eigen.json", {"lambda1": eig.lambda1, "residual": eig.residual,
                                     "iterations": eig.iterations, "history": eig.history,
                                     "config": cfg.to_dict()})
    return 0


def cmd_hypotheses(cfg: RunConfig, out: Path, lambda1: float | None = None) -> int:
    if lambda1 is None:
        mesh = build_mesh(cfg.domain, cfg.resolution)
        lambda1 = first_eigenpair(mesh, cfg.p, cfg.tolerances["eigen"]).lambda1
    r = _load_reaction(cfg.reaction, lambda1)
    rep = check_hypotheses(r, cfg.p, lambda1)
    (out / "hypotheses.json").write_text(rep.to_json() + "\n")
    flags = {f"holds_{k}": getattr(rep, f"holds_{k}") for k in ("i", "ii", "iii", "iv", "v", "vi")}
    log.info("hypotheses: %s", flags)
    return 0 if rep.holds_all else 1


def _solve(cfg: RunConfig, out: Path) -> dict:
    mesh = build_mesh(cfg.domain, cfg.resolution)
    tol = cfg.tolerances
    eig = first_eigenpair(mesh, cfg.p, tol["eigen"])
    r = _load_reaction(cfg.reaction, eig.lambda1)
    rep = check_hypotheses(r, cfg.p, eig.lambda1)
    (out / "hypotheses.json").write_text(rep.to_json() + "\n")
    sub = build_subsolution(mesh, eig, r, rep, tol=tol["subsolution"])
    res = continuation(mesh, r, sub, cfg.schedule, tol["cauchy"], min_tol=tol["minimize"])

    write_mesh(mesh, out / "mesh.plapmesh")
    (out / "reaction.json").write_text(r.to_json() + "\n")
    names = _coord_names(mesh)
    for eps, u in zip(res.epsilons, res.solutions):
        _write_csv(out / f"solution_n{round(1 / eps)}.csv", names + ["u"], _node_rows(mesh, u.values))
    _write_csv(out / "limit.csv", names + ["u", "v", "ubar"],
               _node_rows(mesh, res.limit.values, res.residual_field.values, sub.ubar.values))
    rows = []
    for eps, trace in zip(res.epsilons, res.diagnostics["energies"]):
        rows += [[round(1 / eps), i, J] for i, J in enumerate(trace)]
    _write_csv(out / "energy_trace.csv", ["n", "iteration", "energy"], rows)
    _write_csv(out / "w1p_norms.csv", ["n", "eps", "w1p_norm"],
               [[round(1 / e), e, w] for e, w in zip(res.epsilons, res.w1p_norms)])
    gc_info = {}
    try:
        from .reaction import growth_constants

        gc = growth_constants(r, cfg.p, eig.lambda1, rep, ubar_sup=float(np.max(sub.ubar.values)))
        gc_info = {"c1": gc.c1, "c2": gc.c2, "c3": gc.c3}
    except (ValueError, ArithmeticError) as exc:
        gc_info = {"growth_constants": f"unavailable: {exc}"}
    diag = {
        "L": res.L, "k": sub.k, "delta": sub.delta, "lambda1": eig.lambda1,
        "increments": res.increments, "iterations": res.diagnostics["iterations"],
        "load_gap_l1": res.diagnostics["load_gap_l1"], "n": res.diagnostics["n"],
        **gc_info, "config": cfg.to_dict(),
    }
    _write_json(out / "diagnostics.json", diag)
    return {"mesh": mesh, "reaction": r, "eig": eig, "sub": sub, "result": res}


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    _solve(cfg, out)
    return 0


def _load_solution(sol_dir: Path):
    mesh = read_mesh(sol_dir / "mesh.plapmesh")
    r = Reaction.from_json((sol_dir / "reaction.json").read_text())
    data = np.loadtxt(sol_dir / "limit.csv", delimiter=",", skiprows=1, ndmin=2)
    u, v, ub = (FeFunction(mesh, data[:, mesh.dim + j]) for j in range(3))
    norms = []
    if (sol_dir / "w1p_norms.csv").exists():
        norms = list(np.loadtxt(sol_dir / "w1p_norms.csv", delimiter=",", skiprows=1, ndmin=2)[:, 2])
    return mesh, r, u, v, ub, norms


def cmd_verify(cfg: RunConfig, out: Path, solution: Path | None) -> int:
    sol_dir = solution or out
    if not (sol_dir / "limit.csv").exists():
        raise FileNotFoundError(f"no solution files in {sol_dir} (run 'plap solve' first)")
    mesh, r, u, v, ub, norms = _load_solution(sol_dir)
    tol = cfg.tolerances
    rep = verify_run(mesh, r, u, v, ub, p=cfg.p, w1p_norms=norms, tol=tol["inclusion"],
                     seed=cfg.seed, out_dir=out)
    passed = (
        rep.inclusion["fraction"] >= tol["inclusion_fraction"]
        and (rep.subsolution_margin is None or rep.subsolution_margin >= -tol["subsolution"])
        and rep.boundary_growth["l_hat"] > 0
    )
    log.info("verify: inclusion %.4f, margin %s, l_hat %.4g",
             rep.inclusion["fraction"], rep.subsolution_margin, rep.boundary_growth["l_hat"])
    return 0 if passed else 1


def cmd_mesh_export(cfg: RunConfig, out: Path) -> int:
    write_mesh(build_mesh(cfg.domain, cfg.resolution), out / "mesh.plapmesh")
    return 0


def _set_path(doc: dict, path: str, value) -> None:
    keys = path.split(".")
    cur = doc
    for k in keys[:-1]:
        if isinstance(cur.get(k), str):
            cur[k] = {"preset": cur[k], "params": {}}
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value


def _sweep_one(args) -> dict:
    doc, run_dir = args
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    row = {"run": run_dir.name, "status": "ok"}
    try:
        cfg = parse_config(doc)
        _write_json(run_dir / "config.json", cfg.to_dict())
        state = _solve(cfg, run_dir)
        res, mesh = state["result"], state["mesh"]
        rep = verify_run(mesh, state["reaction"], res.limit, res.residual_field,
                         state["sub"].ubar, p=cfg.p, w1p_norms=res.w1p_norms,
                         tol=cfg.tolerances["inclusion"], seed=cfg.seed, out_dir=run_dir)
        row.update(lambda1=state["eig"].lambda1, L=res.L,
                   inclusion_fraction=rep.inclusion["fraction"], linf=rep.linf,
                   l_hat=rep.boundary_growth["l_hat"])
    except Exception as exc:  # recorded in the index, the sweep goes on
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
        (run_dir / "FAILED").write_text(row["status"] + "\n")
    return row


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int) -> int:
    if not cfg.grid:
        raise ConfigError("invalid config field 'grid': sweep needs a parameter grid")
    keys = sorted(cfg.grid)
    base = cfg.to_dict()
    base.pop("grid")
    tasks, params = [], []
    for i, combo in enumerate(itertools.product(*(cfg.grid[k] for k in keys))):
        doc = copy.deepcopy(base)
        for k, val in zip(keys, combo):
            _set_path(doc, k, val)
        tasks.append((doc, str(out / f"run{i:03d}")))
        params.append(dict(zip(keys, combo)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    metrics = ["lambda1", "L", "inclusion_fraction", "linf", "l_hat"]
    _write_csv(out / "index.csv", ["run"] + keys + metrics + ["status"],
               [[row["run"]] + [prm[k] for k in keys]
                + [row.get(m, float("nan")) for m in metrics] + [row["status"]]
                for row, prm in zip(rows, params)])
    return 0 if all(r["status"] == "ok" for r in rows) else 1


# }}}


def _configure_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("PLAP_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plap", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("eigen", "solve", "verify", "hypotheses", "sweep", "mesh-export"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="run configuration (JSON)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int, default=1)
        for tol in DEFAULT_TOLERANCES:
            sp.add_argument(f"--tol-{tol.replace('_', '-')}", type=float, dest=f"tol_{tol}")
        if name == "verify":
            sp.add_argument("--solution", type=Path, help="directory written by 'plap solve'")
        if name == "hypotheses":
            sp.add_argument("--lambda1", type=float, help="skip the eigen solve")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()
    try:
        doc = json.loads(args.config.read_text()) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        print(f"plap: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(doc)
        if args.seed is not None:
            cfg.seed = args.seed
        for tol in DEFAULT_TOLERANCES:
            val = getattr(args, f"tol_{tol}")
            if val is not None:
                _require(val > 0, f"--tol-{tol.replace('_', '-')}", "must be positive")
                cfg.tolerances[tol] = val
    except ConfigError as exc:
        print(f"plap: {exc}", file=sys.stderr)
        return 2

    out = args.out or Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        if args.command == "eigen":
            status = cmd_eigen(cfg, out)
        elif args.command == "solve":
            status = cmd_solve(cfg, out)
        elif args.command == "verify":
            status = cmd_verify(cfg, out, args.solution)
        elif args.command == "hypotheses":
            status = cmd_hypotheses(cfg, out, args.lambda1)
        elif args.command == "sweep":
            status = cmd_sweep(cfg, out, args.jobs)
        else:
            status = cmd_mesh_export(cfg, out)
    except ConfigError as exc:
        print(f"plap: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"plap {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
