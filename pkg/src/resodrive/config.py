"""Run configuration: one JSON document with geometry, circuit, sweep, montecarlo and trap sections."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import geometry as geo
from .montecarlo import PerturbationSpec
from .netlist import SweepSpec
from .trapfield.mesh import TrapGeometry
from .trapfield.trap import ATOMIC_MASS, DriveConfig, IonSpec

__all__ = ["RunConfig", "ConfigError", "load_config", "ValidationError"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ResonatorSection(_Strict):
    coil_diameter: float = Field(42e-3, gt=0)
    wire_thickness: float = Field(5e-3, gt=0)
    pitch: float = Field(10e-3, gt=0)
    turns: int = Field(8, gt=0)
    shield_inner_diameter: float = Field(103e-3, gt=0)
    shield_length: float = Field(0.20, gt=0)
    coil_separation: float = Field(30e-3, gt=0)
    coil_height: Optional[float] = Field(None, gt=0)


class WireSection(_Strict):
    length: float = Field(gt=0)
    radius: float = Field(gt=0)
    separation: float = Field(20e-3, gt=0)
    height: float = Field(80e-3, gt=0)


class MaterialSection(_Strict):
    resistivity: float = Field(geo.COPPER_RESISTIVITY, gt=0)


class GeometrySection(_Strict):
    resonator: ResonatorSection = ResonatorSection()
    wires: WireSection = WireSection(length=0.15, radius=0.5e-3)
    trap_wire: WireSection = WireSection(length=0.10, radius=0.25e-3)
    material: MaterialSection = MaterialSection()
    resistance_frequency: float = Field(30e6, gt=0)


class CircuitSection(_Strict):
    overrides: dict[str, float] = Field(default_factory=dict)
    stage: Literal["bare", "biastee", "trap"] = "trap"

    @field_validator("overrides")
    @classmethod
    def _known(cls, v: dict[str, float]) -> dict[str, float]:
        unknown = sorted(set(v) - geo.OVERRIDABLE)
        if unknown:
            raise ValueError(f"unknown override(s): {', '.join(unknown)}")
        return v


class SweepSection(_Strict):
    scale: Literal["lin", "dec"] = "lin"
    points: int = Field(40001, ge=2)
    f_start: float = Field(20e6, gt=0)
    f_stop: float = Field(100e6, gt=0)


class MonteCarloSection(_Strict):
    relative_bound: float = Field(0.10, ge=0, lt=1)
    distribution: Literal["uniform", "normal-truncated"] = "uniform"
    included_components: list[str] = Field(default_factory=lambda: ["*"])
    samples: int = Field(1000, ge=1)
    seed: int = 0
    bins: int = Field(30, ge=1)
    max_failure_fraction: float = Field(0.10, ge=0, le=1)


class TrapGeometrySection(_Strict):
    rod_radius: float = Field(200e-6, gt=0, description="not published for the reference trap; sets absolute secular frequencies")
    rod_length: float = Field(4e-3, gt=0, description="not published; rods must extend past the end caps")
    ion_rod_distance: float = Field(400e-6, gt=0)
    ion_endcap_distance: float = Field(400e-6, gt=0)
    endcap_radius: float = Field(62.5e-6, gt=0)
    panels_per_electrode: int = Field(400, ge=16)


class DriveSection(_Strict):
    v_pp: float = Field(800.0, gt=0)
    drive_frequency_hz: float = Field(30e6, gt=0)
    endcap_dc: tuple[float, float] = (8.0, 8.0)
    electrode_dc_bias: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    endcap_rf_fraction: float = 0.0


class IonSection(_Strict):
    mass_u: float = Field(171.0, gt=0)
    charge_e: float = 1.0

    @field_validator("charge_e")
    @classmethod
    def _nonzero(cls, v: float) -> float:
        if v == 0:
            raise ValueError("ion charge must be non-zero")
        return v


class TrapSection(_Strict):
    geometry: TrapGeometrySection = TrapGeometrySection()
    drive: DriveSection = DriveSection()
    ion: IonSection = IonSection()
    map_points: int = Field(41, ge=3)
    interpret: list[str] = Field(default_factory=list)


class RunConfig(_Strict):
    geometry: GeometrySection = GeometrySection()
    circuit: CircuitSection = CircuitSection()
    sweep: SweepSection = SweepSection()
    montecarlo: MonteCarloSection = MonteCarloSection()
    trap: TrapSection = TrapSection()
    output_dir: Optional[str] = None

    # conversion to domain objects
    def circuit_inputs(self) -> geo.CircuitInputs:
        g = self.geometry
        wire = lambda w: geo.WireRun(w.length, w.radius, w.separation, w.height)
        return geo.CircuitInputs(
            resonator=geo.ResonatorGeometry(**g.resonator.model_dump()),
            wires=wire(g.wires),
            trap_wire=wire(g.trap_wire),
            material=geo.MaterialSpec(resistivity=g.material.resistivity),
            resistance_frequency=g.resistance_frequency,
            overrides=dict(self.circuit.overrides),
        )

    def sweep_spec(self) -> SweepSpec:
        s = self.sweep
        return SweepSpec(s.scale, s.points, s.f_start, s.f_stop)

    def perturbation(self, seed: Optional[int] = None) -> PerturbationSpec:
        m = self.montecarlo
        return PerturbationSpec(m.relative_bound, m.distribution, tuple(m.included_components), m.samples,
                                m.seed if seed is None else seed)

    def trap_geometry(self) -> TrapGeometry:
        return TrapGeometry(**self.trap.geometry.model_dump())

    def drive(self, scheme: str) -> DriveConfig:
        d = self.trap.drive
        return DriveConfig(scheme, d.v_pp, 2 * math.pi * d.drive_frequency_hz, tuple(d.endcap_dc),
                           tuple(d.electrode_dc_bias), d.endcap_rf_fraction)

    def ion(self) -> IonSpec:
        from scipy.constants import elementary_charge
        return IonSpec(self.trap.ion.mass_u * ATOMIC_MASS, self.trap.ion.charge_e * elementary_charge)


def _location(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = [f"{_location(e)}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("; ".join(msgs)) from exc


def load_config(path: Optional[str | Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data)
