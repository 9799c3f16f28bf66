"""Command-line entry point: parse a config, dispatch, write reports.

Usage:
    sdelab <command> --config cfg.json [--set key.path=value ...] [--out DIR]

Commands: check, simulate, timechange, localtime, pathwise, weak, maximum,
risk.  Every run writes <out>/report.json embedding the tool version, the
config hash, and the seed base; statistics-heavy commands add CSV
artifacts next to it.  Exit status: 0 pass/consistent, 1 fail/violated,
2 inconclusive, 3 bad config, 4 runtime error.

Reports contain no timestamps or absolute paths, so identical configs
produce byte-identical outputs.  The environment variable SDELAB_WORKERS
sets the worker-thread count for per-seed loops (default 1); results are
reduced in seed order either way.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import batch as _batch
from . import localtime as _lt
from . import risk as _risk
from . import timechange as _tc
from . import uniqueness as _uq
from .coefficients import check_condition, check_modulus, make_check_grid, monotone_bound
from .config import RunConfig, build_model, refracted_params_from_config
from .errors import ConfigError, SdeLabError
from .noise import sample_noise
from .solver import euler_solve, mollified_solve

_EXIT = {"pass": 0, "consistent": 0, "fail": 1, "violated": 1, "inconclusive": 2}


def _workers() -> int:
    try:
        return max(int(os.environ.get("SDELAB_WORKERS", "1")), 1)
    except ValueError:
        return 1


def _map_ordered(fn, items):
    w = _workers()
    if w == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _report(out: Path, command: str, cfg: RunConfig, verdict: str,
            statistics: dict, artifacts: list[str]) -> None:
    _write_json(out / "report.json", {
        "command": command,
        "version": __version__,
        "config_hash": cfg.hash,
        "seed_base": cfg.seed_base,
        "verdict": verdict,
        "statistics": statistics,
        "artifacts": artifacts,
    })


def _default_grid(triple, x0):
    lo = min(min(triple.discontinuities, default=x0), x0) - 5.0
    hi = max(max(triple.discontinuities, default=x0), x0) + 5.0
    return make_check_grid(triple, lo, hi)


# ---------------------------------------------------------------------------
# Command handlers (each returns the exit code)
# ---------------------------------------------------------------------------

def _cmd_check(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    conditions = exp.get("conditions")
    if conditions is None:
        conditions = ["3a", "4a", "4b", "mod_f"] if cfg.model.get("builtin") == "refracted" \
            else ["2a", "2b"]
    gspec = exp.get("grid", {})
    if gspec:
        grid = make_check_grid(triple, float(gspec["lo"]), float(gspec["hi"]),
                               int(gspec.get("n", 201)))
    else:
        grid = _default_grid(triple, cfg.x0)
    reports = {}
    for cond in conditions:
        if cond == "mod_f":
            if triple.modulus_f is None:
                raise ConfigError("mod_f requested but the model carries no bounding function")
            rep = check_modulus(triple, monotone_bound(triple.modulus_f), grid)
        else:
            rep = check_condition(triple, measure, cond, grid)
        reports[cond] = rep.to_dict()
    verdicts = [r["verdict"] for r in reports.values()]
    verdict = "fail" if "fail" in verdicts else (
        "inconclusive" if "inconclusive" in verdicts else "pass")
    _report(out, "check", cfg, verdict, {"conditions": reports}, [])
    return _EXIT[verdict]


def _cmd_simulate(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    n_paths = int(cfg.experiment.get("n_paths", 1))
    level = cfg.numerics.get("mollify_n")
    artifacts = []
    finals = []
    for i in range(n_paths):
        seed = cfg.seed_base + i
        nz = sample_noise(measure, cfg.T, cfg.h, seed)
        if level is None:
            sol = euler_solve(triple, nz, cfg.x0)
        else:
            sol = mollified_solve(triple, int(level), nz, cfg.x0)
        name = f"path_{seed}.csv"
        with (out / name).open("w") as fp:
            sol.to_csv(fp)
        artifacts.append(name)
        finals.append((seed, sol.values[-1], sol.jump_times.size))
    _write_csv(out / "finals.csv", ["seed", "final", "jumps"], finals)
    artifacts.append("finals.csv")
    _report(out, "simulate", cfg, "pass",
            {"n_paths": n_paths, "T": cfg.T, "h": cfg.h,
             "mollify_n": level}, artifacts)
    return 0


def _cmd_timechange(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    n_paths = int(exp.get("n_paths", 200))
    t_check = float(exp.get("t", triple.sigma_lower ** 2 * cfg.T))
    if t_check <= 0:
        raise ConfigError("timechange check needs sigma_lower > 0 or explicit t")

    def one(seed):
        nz = sample_noise(measure, cfg.T, cfg.h, seed)
        sol = euler_solve(triple, nz, cfg.x0)
        tc = _tc.compute_tau(sol, triple.diffusion)
        changed = _tc.time_change_path(sol, tc)
        return _tc.brownian_residual(changed, triple)

    paths = _map_ordered(one, [cfg.seed_base + i for i in range(n_paths)])
    rep = _tc.verify_bm(
        paths, t_check,
        qv_tol=float(exp.get("qv_tol", 0.05)),
        ks_alpha=float(exp.get("ks_alpha", 0.01)))
    _report(out, "timechange", cfg, rep.verdict, rep.to_dict(), [])
    return _EXIT[rep.verdict]


def _cmd_localtime(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    n_paths = int(exp.get("n_paths", 500))
    level = float(exp.get("level", 0.0))
    t = float(exp.get("t", cfg.T))

    occ_vals, tan_vals = [], []
    eps_used = None

    def one(seed):
        nz = sample_noise(measure, cfg.T, cfg.h, seed)
        sol = euler_solve(triple, nz, cfg.x0)
        eps = float(cfg.numerics.get("eps") or _lt.default_bandwidth(sol))
        occ = _lt.occupation_local_time(sol, triple.diffusion, level, eps, t)
        tan = _lt.tanaka_local_time(sol, level, t)
        return eps, occ.value, tan.value, tan.raw_value

    rows = _map_ordered(one, [cfg.seed_base + i for i in range(n_paths)])
    eps_used = rows[0][0]
    occ_vals = [r[1] for r in rows]
    tan_vals = [r[2] for r in rows]
    occ_mean, occ_se = _lt.batch_mean(occ_vals)
    tan_mean, tan_se = _lt.batch_mean(tan_vals)
    gap = abs(occ_mean - tan_mean)
    joint = 3.0 * math.hypot(occ_se, tan_se)
    verdict = "pass" if gap <= joint else "fail"
    _write_csv(out / "estimates.csv",
               ["a", "t", "kind", "eps", "value", "stderr", "seed_count"],
               [(level, t, "occupation", eps_used, occ_mean, occ_se, n_paths),
                (level, t, "tanaka", "", tan_mean, tan_se, n_paths)])
    _write_csv(out / "per_seed.csv", ["seed", "occupation", "tanaka", "tanaka_raw"],
               [(cfg.seed_base + i, r[1], r[2], r[3]) for i, r in enumerate(rows)])
    _report(out, "localtime", cfg, verdict, {
        "level": level, "t": t, "eps": eps_used, "n_paths": n_paths,
        "occupation": {"mean": occ_mean, "se": occ_se},
        "tanaka": {"mean": tan_mean, "se": tan_se},
        "gap": gap, "three_joint_se": joint,
    }, ["estimates.csv", "per_seed.csv"])
    return _EXIT[verdict]


def _cmd_pathwise(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    resolutions = [(float(h), (int(n) if n is not None else None))
                   for h, n in exp.get("resolutions", [[1e-2, None], [1e-3, None]])]
    seeds = [cfg.seed_base + i for i in range(int(exp.get("n_paths", 100)))]
    rep = _uq.pathwise_experiment(
        triple, measure, cfg.x0, resolutions, seeds, T=cfg.T,
        threshold_scale=float(exp.get("threshold_scale", 10.0)),
        config_hash=cfg.hash)
    _write_json(out / "pathwise.json", rep.to_dict())
    _report(out, "pathwise", cfg, rep.verdict, rep.statistics, ["pathwise.json"])
    return _EXIT[rep.verdict]


def _cmd_weak(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    t_list = [float(t) for t in exp.get("t_list", [0.5, 1.0])]
    n_paths = int(exp.get("n_paths", 1000))
    arm_b = exp.get("arm_b", "direct")
    sampler_a = _uq.direct_marginal_sampler(triple, measure, cfg.x0, cfg.h)
    if arm_b == "direct":
        sampler_b = _uq.direct_marginal_sampler(triple, measure, cfg.x0, cfg.h)
    elif arm_b == "timechange":
        grid = _default_grid(triple, cfg.x0)
        smax = float(np.abs(np.asarray(triple.diffusion(grid))).max())
        horizon = max(t_list) * smax ** 2 * 1.05
        sampler_b = _uq.timechanged_marginal_sampler(
            triple, measure, cfg.x0, cfg.h, clock_horizon=horizon)
    elif arm_b == "shifted":
        sampler_b = _uq.direct_marginal_sampler(triple, measure, cfg.x0 + 1.0, cfg.h)
    else:
        raise ConfigError(f"unknown weak arm {arm_b!r}")
    rep = _uq.weak_experiment(sampler_a, sampler_b, t_list, n_paths,
                              seed_base=cfg.seed_base,
                              alpha=float(exp.get("alpha", 0.01)),
                              config_hash=cfg.hash)
    _write_json(out / "weak.json", rep.to_dict())
    _report(out, "weak", cfg, rep.verdict, rep.statistics, ["weak.json"])
    return _EXIT[rep.verdict]


def _cmd_maximum(cfg: RunConfig, out: Path) -> int:
    triple, measure = build_model(cfg.model)
    exp = cfg.experiment
    seeds = [cfg.seed_base + i for i in range(int(exp.get("n_paths", 100)))]
    n_levels = exp.get("n_levels", [8, 64])
    rep = _uq.maximum_experiment(
        triple, measure, cfg.x0, cfg.h, seeds,
        n_levels=(int(n_levels[0]), int(n_levels[1])), T=cfg.T,
        enforce_precondition=bool(exp.get("enforce_precondition", True)),
        config_hash=cfg.hash)
    _write_json(out / "maximum.json", rep.to_dict())
    _report(out, "maximum", cfg, rep.verdict, rep.statistics, ["maximum.json"])
    return _EXIT[rep.verdict]


def _cmd_risk(cfg: RunConfig, out: Path) -> int:
    if cfg.model.get("builtin") != "refracted":
        raise ConfigError("risk command needs the refracted builtin model")
    params = refracted_params_from_config(cfg.model.get("params", {}))
    exp = cfg.experiment
    n_paths = int(exp.get("n_paths", 1000))
    psi, psi_se, per_path = _risk.ruin_probability(
        params, cfg.x0, cfg.T, cfg.h, n_paths, seed_base=cfg.seed_base)
    div, div_se, _ = _risk.dividend_stat(
        params, cfg.x0, cfg.T, cfg.h, n_paths, seed_base=cfg.seed_base)
    rows = zip(per_path["seed"], per_path["ruined"], per_path["ruin_time"],
               per_path["running_min"], per_path["occupation_above_p"])
    _write_csv(out / "paths.csv",
               ["seed", "ruined", "ruin_time", "running_min", "occupation_above_p"],
               rows)
    _report(out, "risk", cfg, "pass", {
        "ruin_probability": {"estimate": psi, "stderr": psi_se},
        "dividend": {"estimate": div, "stderr": div_se,
                     "rate": params.dividend_rate},
        "n_paths": n_paths, "T": cfg.T, "h": cfg.h, "x0": cfg.x0,
    }, ["paths.csv"])
    return 0


_COMMANDS = {
    "check": _cmd_check,
    "simulate": _cmd_simulate,
    "timechange": _cmd_timechange,
    "localtime": _cmd_localtime,
    "pathwise": _cmd_pathwise,
    "weak": _cmd_weak,
    "maximum": _cmd_maximum,
    "risk": _cmd_risk,
}


def _apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key.path=value")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdelab",
        description="simulation and verification experiments for threshold jump-diffusions")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config entry (JSON-parsed value)")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    args = parser.parse_args(argv)

    try:
        raw = json.loads(Path(args.config).read_text())
        raw = _apply_overrides(raw, args.set)
        cfg = RunConfig.from_dict(raw)
        out = Path(args.out or cfg.output.get("dir", "out"))
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (SdeLabError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
