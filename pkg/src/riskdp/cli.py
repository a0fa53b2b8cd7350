"""Batch runner: load a JSON problem config, solve, verify, simulate, emit CSV/JSON.

Outputs per tolerance value delta in the sweep, under <out>/delta_<d>/:
  value_t{t}.csv   grid point, value (INF marks infeasible), u_star, z_star
  safe_sets.csv    stage, lo, hi (EMPTY when no node is feasible)
  inclusions.json  safe-set cross-checks against safety probabilities
plus a single <out>/sim.csv with one row per delta.

Floats are written with 17 significant digits so re-parsing reproduces the
in-memory values exactly, and identical (config, seed, flags) runs produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid,
                   SystemModel)
from .dp import SolveResult, backward_solve
from .probsafe import check_inclusions
from .sim import evaluate

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "normal_samples",
    "inventory_cost",
    "zero_cost",
    "run",
    "main",
]

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_SOLVER_FAILURE = 2
EXIT_INCLUSION_VIOLATION = 3

_DEFAULT_GRID = {"lo": -40.0, "hi": 140.0, "step": 1.0}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# ---------------------------------------------------------------------------
# deterministic disturbance generation
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _splitmix64(seed: int, count: int) -> list[int]:
    """SplitMix64 stream of `count` 64-bit words."""
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        out.append(z ^ (z >> 31))
    return out


def normal_samples(mean: float, std: float, n: int, seed: int) -> np.ndarray:
    """n normal draws via Box-Muller over a SplitMix64 stream.

    Bit-for-bit reproducible for a given (mean, std, n, seed), independent of
    numpy's generator internals.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if std < 0:
        raise ValueError("std must be nonnegative")
    pairs = (n + 1) // 2
    words = _splitmix64(seed, 2 * pairs)
    u = np.array([(w >> 11) * 2.0 ** -53 for w in words])  # uniform in [0, 1)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return mean + std * z[:n]


# ---------------------------------------------------------------------------
# cost catalogue (JSON-nameable costs)
# ---------------------------------------------------------------------------

def inventory_cost(c_o: float = 1.0, c_u: float = 1.0) -> CostSpec:
    """Holding/shortage cost c_o*(x+u-w)^+ + c_u*(w-x-u)^+ with zero terminal."""
    def stage(x, u, w):
        s = np.asarray(x, dtype=float) + u - w
        return c_o * np.maximum(s, 0.0) + c_u * np.maximum(-s, 0.0)

    return CostSpec(stage, lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                    convex=True)


def zero_cost() -> CostSpec:
    """Zero stage and terminal cost; useful for pure feasibility studies."""
    zero = lambda *args: np.zeros_like(np.asarray(args[0], dtype=float))
    return CostSpec(zero, zero, convex=True)


def _build_cost(spec: dict) -> CostSpec:
    kind = spec.get("kind")
    if kind == "inventory":
        return inventory_cost(float(spec.get("c_o", 1.0)), float(spec.get("c_u", 1.0)))
    if kind == "zero":
        return zero_cost()
    raise ConfigError(f"unknown cost kind {kind!r} (expected 'inventory' or 'zero')")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Validated run description: problem instance plus batch settings."""

    model: SystemModel
    cost: CostSpec
    cost_spec: dict
    safe_set: IntervalSet
    risk: RiskSpec
    horizon: int
    grid: StateGrid
    x0: float
    sweep: tuple[float, ...]
    outputs: str
    seed: int
    n_traj: int
    envelope: bool

    def problem(self, delta: float | None = None) -> ProblemConfig:
        risk = self.risk if delta is None else RiskSpec(self.risk.alpha, delta)
        return ProblemConfig(self.model, self.cost, self.safe_set, risk,
                             self.horizon, self.grid)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"missing key {key!r} in {where}")
    return doc[key]


def _build_model(spec: dict) -> tuple[SystemModel, dict]:
    dist = _require(spec, "disturbance", "model")
    if "samples" in dist:
        samples = np.asarray(dist["samples"], dtype=float)
        if "weights" in dist:
            weights = np.asarray(dist["weights"], dtype=float)
        else:
            weights = np.full(samples.size, 1.0 / samples.size)
    elif {"mean", "std", "n", "seed"} <= dist.keys():
        samples = normal_samples(float(dist["mean"]), float(dist["std"]),
                                 int(dist["n"]), int(dist["seed"]))
        weights = np.full(samples.size, 1.0 / samples.size)
    else:
        raise ConfigError("disturbance needs either 'samples' (+optional "
                          "'weights') or all of mean/std/n/seed")
    try:
        model = SystemModel(
            float(_require(spec, "a", "model")), float(_require(spec, "b", "model")),
            samples, weights,
            float(_require(spec, "u_lo", "model")), float(_require(spec, "u_hi", "model")))
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return model, dist


def _build_grid(spec: dict | None) -> StateGrid:
    spec = spec if spec is not None else _DEFAULT_GRID
    try:
        if "points" in spec:
            return StateGrid(np.asarray(spec["points"], dtype=float))
        return StateGrid.regular(float(spec["lo"]), float(spec["hi"]),
                                 float(spec["step"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def _parse_config(doc: dict) -> RunConfig:
    model, _ = _build_model(_require(doc, "model", "config"))
    cost_spec = _require(doc, "cost", "config")
    cost = _build_cost(cost_spec)
    ss = _require(doc, "safe_set", "config")
    try:
        safe_set = IntervalSet(float(ss["lo"]), float(ss["hi"]))
        risk_doc = _require(doc, "risk", "config")
        risk = RiskSpec(float(risk_doc["alpha"]), float(risk_doc["delta"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid safe_set/risk: {exc}") from exc
    horizon = int(_require(doc, "horizon", "config"))
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    grid = _build_grid(doc.get("grid"))

    sweep = tuple(float(d) for d in doc.get("sweep", [risk.delta]))
    if len(sweep) == 0:
        raise ConfigError("sweep must not be empty")
    if any(d < 0 for d in sweep):
        raise ConfigError("sweep values must be nonnegative")
    if any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise ConfigError("sweep values must be strictly increasing")

    n_traj = int(doc.get("n_traj", 10000))
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")

    return RunConfig(
        model=model, cost=cost, cost_spec=dict(cost_spec), safe_set=safe_set,
        risk=risk, horizon=horizon, grid=grid,
        x0=float(_require(doc, "x0", "config")),
        sweep=sweep,
        outputs=str(doc.get("outputs", "out")),
        seed=int(_require(doc, "seed", "config")),
        n_traj=n_traj,
        envelope=bool(doc.get("envelope", True)),
    )


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return _parse_config(doc)


def bundled_config_path() -> Path:
    """Path of the packaged inventory benchmark configuration."""
    return Path(__file__).parent / "configs" / "inventory.json"


# ---------------------------------------------------------------------------
# output writers / readers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "INF"
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _parse_cell(s: str) -> float:
    if s == "INF":
        return math.inf
    if s == "":
        return math.nan
    return float(s)


def _write_value_csv(path: Path, grid, values, u_star=None, z_star=None) -> None:
    n = grid.points.size
    u_star = np.full(n, np.nan) if u_star is None else u_star
    z_star = np.full(n, np.nan) if z_star is None else z_star
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,value,u_star,z_star\n")
        for i in range(n):
            fh.write(f"{_fmt(grid.points[i])},{_fmt(values[i])},"
                     f"{_fmt(u_star[i])},{_fmt(z_star[i])}\n")


def read_value_csv(path) -> dict[str, np.ndarray]:
    """Re-parse a value CSV; INF becomes +inf, blanks become nan."""
    cols: dict[str, list[float]] = {"x": [], "value": [], "u_star": [], "z_star": []}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            for key, cell in zip(header, line.rstrip("\n").split(",")):
                cols[key].append(_parse_cell(cell))
    return {k: np.asarray(v) for k, v in cols.items()}


def _write_safe_sets_csv(path: Path, safe_sets) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("stage,lo,hi\n")
        for t, s in enumerate(safe_sets):
            if s is None:
                fh.write(f"{t},EMPTY,EMPTY\n")
            else:
                fh.write(f"{t},{_fmt(s.lo)},{_fmt(s.hi)}\n")


def _write_sim_csv(path: Path, horizon: int, rows) -> None:
    cvar_cols = [f"cvar_t{t}" for t in range(horizon)]
    se_cols = [f"cvar_se_t{t}" for t in range(horizon)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("delta,mean_total_cost,std_error,n_traj,violations,"
                 + ",".join(cvar_cols + se_cols) + "\n")
        for delta, rep in rows:
            cells = [_fmt(delta), _fmt(rep.mean_total_cost), _fmt(rep.std_error),
                     str(rep.trajectories), str(rep.constraint_violations)]
            cells += [_fmt(c) for c in rep.per_stage_cvar_estimates]
            cells += [_fmt(c) for c in rep.per_stage_cvar_std_errors]
            fh.write(",".join(cells) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _delta_dirname(delta: float) -> str:
    return f"delta_{delta:g}"


def _resolved_instance(rc: RunConfig) -> dict:
    return {
        "model": {
            "a": rc.model.a, "b": rc.model.b,
            "u_lo": rc.model.u_lo, "u_hi": rc.model.u_hi,
            "samples": [float(s) for s in rc.model.samples],
            "weights": [float(w) for w in rc.model.weights],
        },
        "cost": rc.cost_spec,
        "safe_set": {"lo": rc.safe_set.lo, "hi": rc.safe_set.hi},
        "risk": {"alpha": rc.risk.alpha, "delta": rc.risk.delta},
        "horizon": rc.horizon,
        "grid": {"n": rc.grid.n,
                 "lo": float(rc.grid.points[0]), "hi": float(rc.grid.points[-1])},
        "x0": rc.x0,
        "sweep": list(rc.sweep),
        "outputs": rc.outputs,
        "seed": rc.seed,
        "n_traj": rc.n_traj,
        "envelope": rc.envelope,
    }


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def run(config_path, out_dir=None, delta_sweep=None, seed=None, n_traj=None,
        envelope=None, strict: bool = False, dry_run: bool = False,
        stdout=None) -> int:
    """Execute the solve/verify/simulate pipeline for one config file.

    Flag arguments override the corresponding config fields.  Returns the
    process exit code (0 ok, 1 bad config, 2 solver failure, 3 inclusion
    violation under strict mode).
    """
    out = stdout if stdout is not None else sys.stdout
    try:
        rc = load_config(config_path)
        overrides = {}
        if out_dir is not None:
            overrides["outputs"] = str(out_dir)
        if delta_sweep is not None:
            sweep = tuple(float(d) for d in delta_sweep)
            if len(sweep) == 0 or any(d < 0 for d in sweep) \
                    or any(b <= a for a, b in zip(sweep, sweep[1:])):
                raise ConfigError("delta sweep must be nonempty, nonnegative "
                                  "and strictly increasing")
            overrides["sweep"] = sweep
        if seed is not None:
            overrides["seed"] = int(seed)
        if n_traj is not None:
            if int(n_traj) < 1:
                raise ConfigError("n_traj must be >= 1")
            overrides["n_traj"] = int(n_traj)
        if envelope is not None:
            overrides["envelope"] = bool(envelope)
        if overrides:
            rc = replace(rc, **overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    if dry_run:
        json.dump(_resolved_instance(rc), out, indent=2, sort_keys=True)
        out.write("\n")
        return EXIT_OK

    root = Path(rc.outputs)
    root.mkdir(parents=True, exist_ok=True)

    sim_rows = []
    violation = False
    for delta in rc.sweep:
        cfg = rc.problem(delta)
        try:
            result = backward_solve(cfg, envelope=rc.envelope)
        except RuntimeError as exc:
            print(f"error: solver failed at delta={delta:g}: {exc}", file=sys.stderr)
            return EXIT_SOLVER_FAILURE

        ddir = root / _delta_dirname(delta)
        ddir.mkdir(parents=True, exist_ok=True)
        for t in range(cfg.horizon + 1):
            u = result.policy.u[t] if t < cfg.horizon else None
            z = result.policy.z[t] if t < cfg.horizon else None
            _write_value_csv(ddir / f"value_t{t}.csv", cfg.grid,
                             result.values[t].values, u, z)
        _write_safe_sets_csv(ddir / "safe_sets.csv", result.safe_sets)

        report = check_inclusions(result, cfg)
        _write_json(ddir / "inclusions.json", report.to_dict())
        if not report.all_hold:
            violation = True

        try:
            rep = evaluate(result, cfg.model, cfg.cost, rc.x0, rc.n_traj, rc.seed)
        except ValueError as exc:
            print(f"error: simulation failed at delta={delta:g}: {exc}",
                  file=sys.stderr)
            return EXIT_SOLVER_FAILURE
        sim_rows.append((delta, rep))

    _write_sim_csv(root / "sim.csv", rc.horizon, sim_rows)
    if strict and violation:
        print("error: safe-set inclusion check violated (see inclusions.json)",
              file=sys.stderr)
        return EXIT_INCLUSION_VIOLATION
    return EXIT_OK


def _parse_sweep_arg(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep value: {exc}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="riskdp",
        description="Risk-constrained stochastic optimal control solver")
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", help="solve, verify and simulate a configured problem")
    sp.add_argument("--config", required=True, help="JSON problem configuration")
    sp.add_argument("--out", help="output directory (overrides config)")
    sp.add_argument("--delta-sweep", type=_parse_sweep_arg, metavar="A,B,C",
                    help="comma-separated tolerance values (overrides config)")
    sp.add_argument("--seed", type=int, help="simulation seed (overrides config)")
    sp.add_argument("--n-traj", type=int, help="rollouts per delta (overrides config)")
    sp.add_argument("--no-envelope", action="store_true",
                    help="disable convex-envelope enforcement")
    sp.add_argument("--strict", action="store_true",
                    help="exit 3 when an inclusion check fails")
    sp.add_argument("--dry-run", action="store_true",
                    help="validate and print the resolved instance, then stop")
    args = parser.parse_args(argv)

    return run(args.config,
               out_dir=args.out,
               delta_sweep=args.delta_sweep,
               seed=args.seed,
               n_traj=args.n_traj,
               envelope=False if args.no_envelope else None,
               strict=args.strict,
               dry_run=args.dry_run)


if __name__ == "__main__":
    raise SystemExit(main())
