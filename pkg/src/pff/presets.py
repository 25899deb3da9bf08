"""Build meshes, boundary conditions and solver settings from a run configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .amr import AmrPolicy
from .config import RunConfig
from .errors import ConfigurationError
from .material import Cubic, MaterialParams, Quadratic, Rational, Split
from .mesh import DirichletBC, HierMesh, refine_elements
from .solver import StepController


@dataclass
class Problem:
    mesh: HierMesh
    bcs: list[DirichletBC]
    params: MaterialParams
    controller: StepController
    amr: AmrPolicy


def material_params(cfg: RunConfig) -> MaterialParams:
    m = cfg.material
    if m.degradation == "quadratic":
        deg = Quadratic()
    elif m.degradation == "cubic":
        deg = Cubic(m.cubic_s)
    else:
        deg = Rational(m.rational_a1, m.rational_a2, m.rational_a3, m.rational_p)
    return MaterialParams(
        lame_lambda=m.lame_lambda,
        shear_mu=m.shear_mu,
        Gc=m.Gc,
        length_l=m.length_l,
        degradation=deg,
        split=Split(m.split),
        c_w=m.c_w,
        residual_stiffness=m.residual_stiffness,
    )


def step_controller(cfg: RunConfig) -> StepController:
    s = cfg.solver
    return StepController(
        stepsize=s.stepsize,
        dtau_max=s.dtau_max,
        switch_energy=s.switch_energy or None,
        optiter=s.optiter,
        max_iter=s.max_iter,
        tol=s.tol,
        relax=s.type != "monolithic-no-relax",
        max_steps=s.max_steps,
        max_lambda=s.max_lambda,
        final_dissipation=s.final_dissipation,
        stop_load_ratio=s.stop_load_ratio,
    )


def build_mesh(cfg: RunConfig) -> HierMesh:
    g = cfg.geometry
    depth = cfg.amr.max_depth
    if g.preset == "tbt":
        return geometry.tapered_bar(g.nx, g.ny, g.length, g.width_fixed, g.width_loaded, max_depth=depth)
    if g.preset == "rectangle":
        return geometry.rectangle(g.nx, g.ny, 0.0, g.length, 0.0, g.height, max_depth=depth)
    if g.preset == "eh":
        return geometry.plate_with_hole(
            g.nx, g.ny, center=(g.hole_x, g.hole_y), radius=g.hole_radius, max_depth=depth
        )
    mesh = geometry.notched_square(g.nx, g.notch_length, max_depth=depth)
    tip = np.array([g.notch_length, 0.5])
    for _ in range(g.seed_levels):
        ids = mesh.active_ids
        centers = mesh.nodes[mesh.elements[ids]].mean(axis=1)
        near = ids[np.linalg.norm(centers - tip, axis=1) <= g.seed_radius]
        mesh = refine_elements(mesh, near)
    return mesh


def boundary_conditions(cfg: RunConfig) -> list[DirichletBC]:
    preset, clamp = cfg.geometry.preset, cfg.geometry.clamp_loaded_edge
    if preset == "tbt":
        bcs = [DirichletBC("left", "x"), DirichletBC("left", "y"), DirichletBC("right", "x", "driven")]
        if clamp:
            bcs.append(DirichletBC("right", "y"))
        return bcs
    if preset == "rectangle":
        bcs = [DirichletBC("left", "x"), DirichletBC("bottom", "y"), DirichletBC("top", "y", "driven")]
        if clamp:
            bcs.append(DirichletBC("top", "x"))
        return bcs
    bcs = [DirichletBC("bottom", "x"), DirichletBC("bottom", "y")]
    if preset == "sens":
        bcs += [DirichletBC("left", "y"), DirichletBC("right", "y"), DirichletBC("top", "x", "driven")]
        if clamp:
            bcs.append(DirichletBC("top", "y"))
        return bcs
    bcs.append(DirichletBC("top", "y", "driven"))
    if clamp:
        bcs.append(DirichletBC("top", "x"))
    return bcs


def build_problem(cfg: RunConfig) -> Problem:
    """Validate ``cfg`` and build everything a run needs.

    Constraint violations caught by the component constructors are
    reported as :class:`ConfigurationError`.
    """
    cfg.validate()
    a = cfg.amr
    try:
        policy = AmrPolicy(a.phi_threshold, a.max_depth, a.resolve_after_refine, a.enabled)
        params, controller = material_params(cfg), step_controller(cfg)
        mesh = build_mesh(cfg)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    return Problem(mesh, boundary_conditions(cfg), params, controller, policy)
