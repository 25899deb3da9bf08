"""Phase-field driven adaptive refinement between load steps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .assembly import Discretization
from .errors import SolverFailure
from .mesh import HierMesh, refine_elements, transfer_state
from .state import SimState

log = logging.getLogger(__name__)


@dataclass
class AmrPolicy:
    phi_threshold: float = 0.2
    max_depth: int = 4
    resolve_after_refine: bool = True
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.phi_threshold < 1.0:
            raise ValueError("phi_threshold must lie in (0, 1)")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


def mark(mesh: HierMesh, state: SimState, policy: AmrPolicy) -> set[int]:
    """Active elements below ``max_depth`` whose largest nodal phase exceeds the threshold."""
    ids = mesh.active_ids
    ids = ids[mesh.level[ids] < min(policy.max_depth, mesh.max_depth)]
    if ids.size == 0:
        return set()
    phi = state.phi
    peak = phi[mesh.elements[ids]].max(axis=1)
    return set(ids[peak > policy.phi_threshold].tolist())


def amr_cycle(disc: Discretization, state: SimState, policy: AmrPolicy, step_solver=None):
    """Refine until nothing is marked; optionally re-solve after each pass.

    Returns ``(disc, state, refined, ok)``.  ``ok`` is False when a re-solve
    failed; the returned state is then the transferred, unconverged one.
    """
    if not policy.enabled:
        return disc, state, False, True
    refined = False
    while True:
        marked = mark(disc.mesh, state, policy)
        if not marked:
            return disc, state, refined, True
        old = disc.mesh
        new = refine_elements(old, marked)
        if new.n_elements == old.n_elements:
            return disc, state, refined, True
        refined = True
        state = transfer_state(old, new, state)
        disc = Discretization(new, disc.bcs)
        state = _project_constraints(disc, state)
        log.debug("refined %d elements, %d active", len(marked), int(new.active.sum()))
        if policy.resolve_after_refine and step_solver is not None:
            try:
                state, _ = step_solver(disc, state)
            except SolverFailure as exc:
                log.info("re-solve after refinement failed: %s", exc)
                return disc, state, refined, False


def _project_constraints(disc: Discretization, state: SimState) -> SimState:
    """Re-impose prescribed and hanging-node values on the transferred vectors."""
    free = disc.cmap.free
    x = disc.expand(state.x[free], state.lam)
    x_n = disc.expand(state.x_n[free], state.lam_n)
    return SimState(x=x, lam=state.lam, H=state.H, x_n=x_n, lam_n=state.lam_n, H_n=state.H_n)
