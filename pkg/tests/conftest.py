"""Shared fixtures: the inventory benchmark solved and simulated once per session."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from riskdp import backward_solve, evaluate
from riskdp.cli import bundled_config_path, load_config

ACCEPT_DELTAS = (1.0, 5.0, 10.0, 15.0, 20.0)
N_TRAJ = 10000


@pytest.fixture(scope="session")
def benchmark_runconfig():
    return load_config(bundled_config_path())


@pytest.fixture(scope="session")
def benchmark_bundle(benchmark_runconfig):
    """Solve and simulate the benchmark at the acceptance tolerance sweep.

    elapsed measures exactly the solve+simulate work the tradeoff criterion
    bounds (10,000 rollouts per tolerance value).
    """
    rc = benchmark_runconfig
    solutions = {}
    sims = {}
    t0 = time.perf_counter()
    for delta in ACCEPT_DELTAS:
        cfg = rc.problem(delta)
        res = backward_solve(cfg, envelope=rc.envelope)
        solutions[delta] = res
        sims[delta] = evaluate(res, cfg.model, cfg.cost, rc.x0, N_TRAJ, rc.seed)
    elapsed = time.perf_counter() - t0
    return {"rc": rc, "solutions": solutions, "sims": sims, "elapsed": elapsed}
