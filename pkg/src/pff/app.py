"""Run a configured simulation and write its outputs."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from .amr import amr_cycle
from .config import RunConfig
from .io import write_fields_vtk, write_history_csv
from .presets import build_problem
from .solver import Simulation, SimulationResult, StepCallback
from .staggered import solve_staggered

log = logging.getLogger(__name__)


def run_config(cfg: RunConfig, out_dir=None, on_step: Optional[StepCallback] = None) -> SimulationResult:
    """Build the problem described by ``cfg``, run it and optionally write outputs.

    With ``out_dir`` set, the history CSV is written at the end (also after
    an abort) and field snapshots every ``output.vtk_every`` steps plus the
    final state.
    """
    problem = build_problem(cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    every = cfg.output.vtk_every

    def step_hook(record, disc, state):
        if out is not None and cfg.output.write_vtk and record.step % every == 0:
            write_fields_vtk(disc.mesh, state, out / f"step_{record.step:04d}.vtk")
        if on_step is not None:
            on_step(record, disc, state)

    policy = problem.amr

    def refine(disc, state, solve):
        return amr_cycle(disc, state, policy, solve)

    hook = refine if policy.enabled else None

    if cfg.solver.type == "staggered":
        result = solve_staggered(
            problem.mesh, problem.bcs, problem.params, problem.controller,
            cfg.solver.stagger_tol, cfg.solver.stagger_max, hook, step_hook,
        )
    else:
        sim = Simulation(problem.mesh, problem.bcs, problem.params, problem.controller, hook, step_hook)
        result = sim.run()

    if out is not None:
        write_history_csv(result.history, out / cfg.output.history)
        last = result.history[-1].step if result.history else 0
        if cfg.output.write_vtk and (last == 0 or last % every):
            write_fields_vtk(result.mesh, result.state, out / f"step_{last:04d}.vtk")
    log.info("%s after %d steps: %s", result.status, len(result.history), result.message)
    return result
