"""Bundled reference inputs: the two-tank test circuit, the full derived circuit and a run config.

The files in this package are generated by the functions below;
``python3 -m resodrive.corpus`` rewrites them and the test suite checks they
are in sync.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .. import geometry as geo
from ..netlist import SweepSpec, serialize

FILES = ("two_tank.cir", "drive_chain.cir", "reference_config.json")

# rounded design values of the built resonator and wiring
REFERENCE_OVERRIDES = {
    "L": 0.9e-6,
    "C_coil": 2.1e-12,
    "C_shield": 2.6e-12,
    "C_c": 0.2e-12,
    "R": 0.1,
    "L_w": 200e-9,
    "R_w": 0.1,
    "C_ww": 1.1e-12,
    "C_wg": 1.4e-12,
    "L_t": 100e-9,
    "R_t": 0.05,
    # no geometric model; optimum |S11| at the lower mode is 48.4 nH
    "M_f": 48e-9,
}
DRIVE_CHAIN_SWEEP = SweepSpec("lin", 40001, 20e6, 100e6)

TWO_TANK_TEXT = """\
.title two coupled helical tanks, inductive feed
VS FEED 0 AC 1 0
LF FEED 0 500n
R1 0 A1 0.1
L1 A1 N1 0.9u
R2 0 A2 0.1
L2 N2 A2 0.9u
C1 N1 0 4.7p
C2 N2 0 4.7p
CC N1 N2 0.2p
K1 L1 L2 0.03
* feed coupling chosen for the best match of the lower mode
KF LF L1 0.049
.ac lin 12001 70e6 82e6
.port VS 50
.probe v(N1) v(N2)
.end
"""


def two_tank_text() -> str:
    return TWO_TANK_TEXT


def drive_chain_text() -> str:
    inp = geo.CircuitInputs(overrides=REFERENCE_OVERRIDES)
    return serialize(geo.derive_circuit(inp, stage="trap", sweep=DRIVE_CHAIN_SWEEP).netlist)


def reference_config() -> dict:
    return {
        "circuit": {"overrides": dict(REFERENCE_OVERRIDES), "stage": "trap"},
        "sweep": {"scale": DRIVE_CHAIN_SWEEP.scale, "points": DRIVE_CHAIN_SWEEP.points,
                  "f_start": DRIVE_CHAIN_SWEEP.f_start, "f_stop": DRIVE_CHAIN_SWEEP.f_stop},
        "montecarlo": {"relative_bound": 0.10, "distribution": "uniform", "samples": 1000, "seed": 1},
        "trap": {"drive": {"v_pp": 800.0, "drive_frequency_hz": 30e6, "endcap_dc": [8.0, 8.0]},
                 "ion": {"mass_u": 171.0}},
    }


def reference_config_text() -> str:
    return json.dumps(reference_config(), indent=2, sort_keys=True) + "\n"


GENERATORS = {"two_tank.cir": two_tank_text, "drive_chain.cir": drive_chain_text, "reference_config.json": reference_config_text}


def path(name: str):
    """Filesystem handle of a bundled file."""
    if name not in FILES:
        raise KeyError(f"no bundled file {name!r}; choose from {FILES}")
    return resources.files(__name__).joinpath(name)


def load(name: str) -> str:
    return path(name).read_text()


def regenerate(directory: Path | None = None) -> list[Path]:
    directory = Path(directory or Path(__file__).parent)
    out = []
    for name, gen in GENERATORS.items():
        p = directory / name
        p.write_text(gen())
        out.append(p)
    return out
