"""Monolithic Newton solver with dissipation-based arc-length continuation.

A run starts under displacement control.  Once a converged step dissipates
at least ``switch_energy``, the load factor becomes an unknown and every
further step is constrained to dissipate ``delta_tau``.  Newton updates are
scaled by an adaptive under-relaxation factor ``beta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    N_GP,
    Discretization,
    LinearSystem,
    assemble_global,
    internal_forces,
    reaction_load,
)
from .errors import AssemblyError, SolverFailure
from .material import MaterialParams
from .mesh import HierMesh
from .state import SimState

log = logging.getLogger(__name__)

DISPLACEMENT = "displacement"
ARC_LENGTH = "arc-length"


@dataclass
class StepController:
    """Step-size, relaxation and termination settings plus their running values."""

    stepsize: float = 1e-4
    dtau_max: float = 0.025
    switch_energy: Optional[float] = None
    optiter: int = 5
    max_iter: int = 30
    tol: float = 1e-3
    constraint_tol: float = 1e-3
    relax: bool = True
    beta_reduction: float = 1.25
    beta_growth: float = 1.05
    beta_min: float = 1e-3
    dtau_growth: float = 2.0
    dtau_shrink_base: float = 0.5
    dtau_shrink_rate: float = 0.25
    max_steps: int = 1000
    max_lambda: float = math.inf
    final_dissipation: float = math.inf
    stop_load_ratio: float = 0.0
    dlam_min: float = 1e-12
    dtau_min: float = 1e-12
    # running values
    mode: str = DISPLACEMENT
    dlam: float = field(default=None)
    dtau: float = 0.0
    beta: float = 1.0
    fail: int = 0

    def __post_init__(self):
        if self.switch_energy is None:
            self.switch_energy = self.dtau_max / 10.0
        if self.dlam is None:
            self.dlam = self.stepsize
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.dtau_max <= 0 or self.switch_energy <= 0:
            raise ValueError("dtau_max and switch_energy must be positive")

    def adapt_dtau(self, iterations: int) -> None:
        if iterations < self.optiter:
            dtau = self.dtau * self.dtau_growth
        else:
            dtau = self.dtau * self.dtau_shrink_base ** (self.dtau_shrink_rate * (iterations - self.optiter))
        self.dtau = min(dtau, self.dtau_max)


# the pattern is structurally symmetric: a symmetric ordering with static
# diagonal pivots fills far less than a column ordering with partial pivoting
_FAST_LU = {"permc_spec": "MMD_AT_PLUS_A", "diag_pivot_thresh": 0.0, "options": {"SymmetricMode": True}}


def _accurate(matrix, x, rhs, rtol: float = 1e-10) -> bool:
    """Normwise backward-error test for ``matrix @ x = rhs``."""
    if not np.all(np.isfinite(x)):
        return False
    scale = spla.norm(matrix, np.inf) * np.abs(x).max() + np.abs(rhs).max()
    return bool(np.abs(matrix @ x - rhs).max() <= rtol * scale)


def _lu_solve(matrix, rhs) -> np.ndarray:
    """Fast factorisation first, partial pivoting when it is inaccurate."""
    try:
        x = spla.splu(matrix, **_FAST_LU).solve(rhs)
        if _accurate(matrix, x, rhs):
            return x
    except RuntimeError:
        pass
    return spla.splu(matrix).solve(rhs)


def _solve(matrix, rhs, bordered: bool = False) -> np.ndarray:
    """Solve the Newton system.

    With ``bordered`` the last row and column hold the arc-length
    constraint.  The symmetric block is factored alone and the load-factor
    update follows from the scalar Schur complement; if that is inaccurate
    (near-singular block at a limit point) the full matrix is factored.
    """
    matrix = matrix.tocsc()
    try:
        dz = _bordered_solve(matrix, rhs) if bordered else None
        if dz is None:
            dz = _lu_solve(matrix, rhs)
    except RuntimeError as exc:  # singular factor
        raise SolverFailure(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(dz)):
        raise SolverFailure("non-finite Newton update")
    return dz


def _bordered_solve(matrix, rhs):
    n = matrix.shape[0] - 1
    b = matrix[:n, n].toarray().ravel()
    c = matrix[n, :n].toarray().ravel()
    try:
        y = _lu_solve(matrix[:n, :n].tocsc(), np.column_stack([rhs[:n], b]))
    except RuntimeError:
        return None
    schur = matrix[n, n] - c @ y[:, 1]
    if not np.isfinite(schur) or schur == 0.0:
        return None
    dlam = (rhs[n] - c @ y[:, 0]) / schur
    dz = np.append(y[:, 0] - dlam * y[:, 1], dlam)
    return dz if _accurate(matrix, dz, rhs) else None


def residual_norm(ls: LinearSystem, dtau: float) -> float:
    """Condensed residual norm; the constraint entry is scaled by ``1/dtau``."""
    if not ls.arc_length:
        return ls.residual_norm
    scaled = ls.constraint / dtau if dtau > 0 else 0.0
    return math.hypot(ls.residual_norm, scaled)


def _converged(ls: LinearSystem, ctrl: StepController, dtau: float) -> bool:
    if not residual_norm(ls, dtau) < ctrl.tol:
        return False
    if ls.arc_length:
        return abs(ls.constraint) <= max(ctrl.constraint_tol * dtau, 1e-12)
    return True


def _newton(disc, params, state, ctrl, arc, dtau):
    free = disc.cmap.free
    x_f = state.x[free].copy()
    lam = state.lam
    first = None
    for it in range(ctrl.max_iter + 1):
        x = disc.expand(x_f, lam)
        try:
            ls = assemble_global(disc, params, x, state.x_n, state.H_n, arc, dtau)
        except AssemblyError as exc:
            raise SolverFailure(str(exc)) from exc
        if not math.isfinite(ls.residual_norm):
            raise SolverFailure("non-finite residual")
        first = ls.residual_norm if first is None else first
        if _converged(ls, ctrl, dtau):
            new = SimState(x=x, lam=lam, H=ls.H, x_n=state.x_n, lam_n=state.lam_n, H_n=state.H_n)
            return new, it, ls
        if it == ctrl.max_iter or ls.residual_norm > 1e12 * max(first, 1.0):
            break
        dz = _solve(ls.matrix, ls.rhs, bordered=arc)
        x_f += ctrl.beta * dz[: disc.n_free]
        if arc:
            lam += ctrl.beta * dz[-1]
    raise SolverFailure(f"no convergence after {ctrl.max_iter} iterations (|r| = {ls.residual_norm:.3e})")


def newton_displacement_step(disc: Discretization, params: MaterialParams, state: SimState, ctrl: StepController):
    """Equilibrate at the fixed load factor ``state.lam``.

    Returns ``(state, iterations)``; raises :class:`SolverFailure`.
    """
    new, it, _ = _newton(disc, params, state, ctrl, False, 0.0)
    return new, it


def arc_length_step(disc: Discretization, params: MaterialParams, state: SimState, ctrl: StepController):
    """Solve for fields and load factor so the step dissipates ``ctrl.dtau``.

    Returns ``(state, iterations, realised load-factor increment)``.
    """
    new, it, _ = _newton(disc, params, state, ctrl, True, ctrl.dtau)
    return new, it, new.lam - state.lam_n


def _phase_quadrature(disc: Discretization, phi_full: np.ndarray):
    n = disc.n_nodes
    phi_e = phi_full[2 * n :][disc.conn] if phi_full.size == 3 * n else phi_full[disc.conn]
    phi_q = phi_e @ N_GP.T
    grad_q = np.einsum("eqia,ei->eqa", disc.dNdx, phi_e)
    return phi_q, grad_q


def fracture_energy(disc: Discretization, params: MaterialParams, x: np.ndarray) -> float:
    """Regularised crack energy ``Gc/(c_w l) * int(phi^2 + l^2 |grad phi|^2)``."""
    phi, grad = _phase_quadrature(disc, x)
    l = params.length_l
    dens = phi**2 + l**2 * np.sum(grad**2, axis=-1)
    return float(params.Gc / (params.c_w * l) * np.sum(disc.detJ * dens))


def incremental_dissipation(disc: Discretization, params: MaterialParams, x: np.ndarray, x_n: np.ndarray) -> float:
    """Linearised dissipation of the increment ``x - x_n`` about the current phase field."""
    phi, grad = _phase_quadrature(disc, x)
    phi_n, grad_n = _phase_quadrature(disc, x_n)
    dphi, dgrad = phi - phi_n, grad - grad_n
    l = params.length_l
    dens = 2.0 * phi * dphi + 2.0 * l**2 * np.sum(grad * dgrad, axis=-1)
    return float(params.Gc / (params.c_w * l) * np.sum(disc.detJ * dens))


@dataclass
class StepRecord:
    step: int
    lam: float
    load: float
    delta_G: float
    iterations: int
    beta: float
    delta_tau: float
    mode: str
    ndof: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulationResult:
    history: list[StepRecord]
    state: SimState
    disc: Discretization
    status: str = "completed"
    message: str = ""

    @property
    def mesh(self) -> HierMesh:
        return self.disc.mesh


def clamp_phase(disc: Discretization, state: SimState) -> SimState:
    n = disc.n_nodes
    free = disc.cmap.free
    x_f = state.x[free].copy()
    is_phi = free >= 2 * n
    x_f[is_phi] = np.clip(x_f[is_phi], 0.0, 1.0)
    x = disc.expand(x_f, state.lam)
    return SimState(x=x, lam=state.lam, H=state.H, x_n=state.x_n, lam_n=state.lam_n, H_n=state.H_n)


StepCallback = Callable[[StepRecord, Discretization, SimState], None]


class Simulation:
    """Path-following driver: displacement control, then arc-length.

    ``amr`` is an optional callable ``(disc, state, resolve) -> (disc, state,
    refined, ok)`` invoked after every converged step.
    """

    def __init__(
        self,
        mesh: HierMesh,
        bcs,
        params: MaterialParams,
        controller: StepController,
        amr=None,
        on_step: Optional[StepCallback] = None,
    ):
        self.disc = Discretization(mesh, bcs)
        self.params = params
        self.ctrl = controller
        self.amr = amr
        self.on_step = on_step
        self.state = SimState.zeros(mesh.n_nodes, mesh.n_elements)
        self.history: list[StepRecord] = []
        self.attempts = 0

    def solve_step(self, disc: Discretization, state: SimState) -> tuple[SimState, int]:
        """Solve the current step from the snapshot held in ``state``."""
        ctrl = self.ctrl
        if ctrl.mode == DISPLACEMENT:
            return newton_displacement_step(disc, self.params, state, ctrl)
        new, it, _ = arc_length_step(disc, self.params, state, ctrl)
        return new, it

    def _fail(self) -> Optional[str]:
        ctrl = self.ctrl
        if ctrl.mode == DISPLACEMENT:
            ctrl.dlam /= 10.0
            if abs(ctrl.dlam) < ctrl.dlam_min:
                return "load increment underflow"
            return None
        ctrl.fail += 1
        if not ctrl.relax:
            ctrl.dtau /= 2.0
        else:
            if ctrl.fail > 2:
                ctrl.dtau /= 2.0
                ctrl.beta /= ctrl.beta_reduction
            ctrl.beta /= ctrl.beta_reduction
            if ctrl.beta < ctrl.beta_min:
                return "relaxation factor underflow"
        if ctrl.dtau < ctrl.dtau_min:
            return "dissipation increment underflow"
        return None

    def run(self) -> SimulationResult:
        ctrl = self.ctrl
        disc, state = self.disc, self.state.commit()
        peak = 0.0
        dissipated = 0.0
        status, message = "completed", "step budget exhausted"
        while len(self.history) < ctrl.max_steps:
            self.attempts += 1
            trial = state.copy()
            if ctrl.mode == DISPLACEMENT:
                trial.lam = state.lam + ctrl.dlam
            try:
                trial, iters = self.solve_step(disc, trial)
                if self.amr is not None:
                    disc, trial, _, ok = self.amr(disc, trial, self.solve_step)
                    if not ok:
                        # roll back on the refined mesh
                        state = trial.rollback()
                        raise SolverFailure("re-solve after refinement failed")
            except SolverFailure as exc:
                log.info("step %d failed (%s): %s", len(self.history) + 1, ctrl.mode, exc)
                state = state.rollback()
                reason = self._fail()
                if reason:
                    status, message = "aborted", reason
                    break
                continue

            if np.any(trial.H[disc.elem_ids] < trial.H_n[disc.elem_ids]):
                raise AssertionError("history variable decreased")
            ctrl.fail = 0
            if ctrl.relax:
                ctrl.beta = min(1.0, ctrl.beta * ctrl.beta_growth)
            dG = incremental_dissipation(disc, self.params, trial.x, trial.x_n)
            trial = clamp_phase(disc, trial)
            f_int = _internal(disc, self.params, trial)
            load = reaction_load(disc.cmap, f_int)
            record = StepRecord(
                step=len(self.history) + 1,
                lam=trial.lam,
                load=load,
                delta_G=dG,
                iterations=iters,
                beta=ctrl.beta,
                delta_tau=ctrl.dtau if ctrl.mode == ARC_LENGTH else 0.0,
                mode=ctrl.mode,
                ndof=disc.n_free,
            )
            self.history.append(record)
            state = trial.commit()
            self.disc, self.state = disc, state
            if self.on_step is not None:
                self.on_step(record, disc, state)
            dissipated += dG
            peak = max(peak, abs(load))

            if ctrl.mode == DISPLACEMENT and dG >= ctrl.switch_energy:
                ctrl.mode = ARC_LENGTH
                ctrl.dlam = 0.0
                ctrl.dtau = ctrl.switch_energy
            elif ctrl.mode == ARC_LENGTH:
                ctrl.adapt_dtau(iters)

            if abs(trial.lam) >= ctrl.max_lambda:
                message = "load factor limit reached"
                break
            if dissipated >= ctrl.final_dissipation:
                message = "final dissipation reached"
                break
            if ctrl.mode == ARC_LENGTH and abs(load) <= ctrl.stop_load_ratio * peak:
                message = "load dropped below threshold"
                break
        self.disc, self.state = disc, state
        return SimulationResult(self.history, state, disc, status, message)


def _internal(disc, params, state):
    return internal_forces(disc, params, state.x, state.x_n, state.H_n)


def run_simulation(mesh, bcs, params, controller, amr=None, on_step=None) -> SimulationResult:
    return Simulation(mesh, bcs, params, controller, amr=amr, on_step=on_step).run()
