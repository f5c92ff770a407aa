"""Boundary-element model of a linear Paul trap and its RF/DC trapping fields."""

from .bem import BemError, BemSolution, solve as solve_basis
from .mesh import MeshError, PanelMesh, TrapGeometry, build_mesh, sphere_mesh, two_sphere_mesh
from .trap import (
    DriveConfig,
    InsideConductorError,
    IonSpec,
    MathieuResult,
    NoMinimumError,
    PoorFitError,
    SecularResult,
    TrapModel,
    anisotropy,
    axial_field,
    ScanInterpretation,
    adiabatic_radial_estimate,
    build_trap_model,
    dc_potential,
    joule_to_ev,
    mathieu_stable,
    rf_potential,
    total_energy,
    interpret_parametric_scan,
    interpret_scans,
    map_csv,
    mathieu_parameters,
    micromotion_amplitude,
    pseudopotential,
    pseudopotential_map,
    rf_field,
    secular_frequencies,
)

__all__ = [
    "BemError", "BemSolution", "solve_basis", "MeshError", "PanelMesh", "TrapGeometry", "build_mesh",
    "sphere_mesh", "two_sphere_mesh", "DriveConfig", "InsideConductorError", "IonSpec", "MathieuResult",
    "NoMinimumError", "PoorFitError", "SecularResult", "TrapModel", "anisotropy", "axial_field",
    "build_trap_model", "interpret_parametric_scan", "interpret_scans", "map_csv", "mathieu_parameters",
    "micromotion_amplitude", "pseudopotential", "pseudopotential_map", "rf_field", "secular_frequencies",
    "ScanInterpretation", "adiabatic_radial_estimate", "dc_potential", "joule_to_ev", "mathieu_stable",
    "rf_potential", "total_energy",
]
