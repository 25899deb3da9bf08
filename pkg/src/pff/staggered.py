"""Staggered reference solver: alternate displacement and phase-field solves.

Displacement control only.  Each load step repeats a u-solve with frozen
phase field and a phase-field solve with frozen displacement until the
change of the free vector over one sweep drops below ``stagger_tol``.
Irreversibility uses the same history variable as the monolithic solver.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .assembly import Discretization, assemble_global, reaction_load
from .errors import AssemblyError, SolverFailure
from .material import MaterialParams
from .mesh import HierMesh
from .solver import (
    DISPLACEMENT,
    SimulationResult,
    StepCallback,
    StepController,
    StepRecord,
    _internal,
    _solve,
    clamp_phase,
    incremental_dissipation,
)
from .state import SimState

log = logging.getLogger(__name__)


def _sub_newton(disc, params, state, x_f, lam, block, ctrl):
    """Newton iterations on one field block; the other block stays frozen."""
    for it in range(ctrl.max_iter + 1):
        x = disc.expand(x_f, lam)
        try:
            ls = assemble_global(disc, params, x, state.x_n, state.H_n)
        except AssemblyError as exc:
            raise SolverFailure(str(exc)) from exc
        r = ls.rhs[block]
        if not np.all(np.isfinite(r)):
            raise SolverFailure("non-finite residual")
        if np.linalg.norm(r) < ctrl.tol:
            return x_f, ls, it
        if it == ctrl.max_iter:
            break
        K = ls.matrix[block][:, block].tocsc()
        x_f[block] += _solve(K, r)
    raise SolverFailure(f"sub-problem did not converge in {ctrl.max_iter} iterations")


def staggered_step(
    disc: Discretization,
    params: MaterialParams,
    state: SimState,
    ctrl: StepController,
    stagger_tol: float = 1e-4,
    stagger_max: int = 500,
):
    """Equilibrate at ``state.lam`` by alternate minimisation.

    Returns ``(state, sweeps)``.  Reaching ``stagger_max`` sweeps ends the
    step without error.
    """
    free = disc.cmap.free
    x_f = state.x[free].copy()
    lam = state.lam
    u_blk, phi_blk = disc.u_free, disc.phi_free
    ls = None
    for sweep in range(1, stagger_max + 1):
        before = x_f.copy()
        x_f, _, _ = _sub_newton(disc, params, state, x_f, lam, u_blk, ctrl)
        x_f, ls, _ = _sub_newton(disc, params, state, x_f, lam, phi_blk, ctrl)
        if np.linalg.norm(x_f - before) < stagger_tol:
            break
    else:
        log.info("stagger budget of %d sweeps reached", stagger_max)
    # the phase solve moved H; make the displacement consistent with the final phase field
    x_f, ls, _ = _sub_newton(disc, params, state, x_f, lam, u_blk, ctrl)
    x = disc.expand(x_f, lam)
    return SimState(x=x, lam=lam, H=ls.H, x_n=state.x_n, lam_n=state.lam_n, H_n=state.H_n), sweep


def solve_staggered(
    mesh: HierMesh,
    bcs,
    params: MaterialParams,
    controller: StepController,
    stagger_tol: float = 1e-4,
    stagger_max: int = 500,
    amr=None,
    on_step: Optional[StepCallback] = None,
) -> SimulationResult:
    """Run the staggered scheme under displacement control.

    Termination follows the controller: step budget, load-factor limit,
    final dissipation, or the load falling below ``stop_load_ratio`` of
    the peak once dissipation has started.
    """
    ctrl = controller
    disc = Discretization(mesh, bcs)
    state = SimState.zeros(mesh.n_nodes, mesh.n_elements)
    history: list[StepRecord] = []
    peak = dissipated = 0.0
    status, message = "completed", "step budget exhausted"

    def solve(d, s):
        return staggered_step(d, params, s, ctrl, stagger_tol, stagger_max)

    while len(history) < ctrl.max_steps:
        trial = state.copy()
        trial.lam = state.lam + ctrl.dlam
        try:
            trial, sweeps = solve(disc, trial)
            if amr is not None:
                disc, trial, _, ok = amr(disc, trial, solve)
                if not ok:
                    state = trial.rollback()
                    raise SolverFailure("re-solve after refinement failed")
        except SolverFailure as exc:
            log.info("staggered step %d failed: %s", len(history) + 1, exc)
            state = state.rollback()
            ctrl.dlam /= 10.0
            if abs(ctrl.dlam) < ctrl.dlam_min:
                status, message = "aborted", "load increment underflow"
                break
            continue
        if np.any(trial.H[disc.elem_ids] < trial.H_n[disc.elem_ids]):
            raise AssertionError("history variable decreased")
        dG = incremental_dissipation(disc, params, trial.x, trial.x_n)
        trial = clamp_phase(disc, trial)
        load = reaction_load(disc.cmap, _internal(disc, params, trial))
        record = StepRecord(len(history) + 1, trial.lam, load, dG, sweeps, 1.0, 0.0, DISPLACEMENT, disc.n_free)
        history.append(record)
        state = trial.commit()
        if on_step is not None:
            on_step(record, disc, state)
        dissipated += dG
        peak = max(peak, abs(load))
        if abs(trial.lam) >= ctrl.max_lambda:
            message = "load factor limit reached"
            break
        if dissipated >= ctrl.final_dissipation:
            message = "final dissipation reached"
            break
        if dissipated >= ctrl.switch_energy and abs(load) <= ctrl.stop_load_ratio * peak:
            message = "load dropped below threshold"
            break
    return SimulationResult(history, state, disc, status, message)
