"""resodrive command line: params | ac | mc | trap.

Exit codes: 0 ok, 2 config/netlist parse error, 3 domain error, 4 singular
circuit, 5 Monte-Carlo failure, 6 field-solver failure. The summary goes to
stdout, diagnostics to stderr. Thread count: RESODRIVE_THREADS.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, corpus, mna, montecarlo
from . import geometry as geo
from .config import ConfigError, RunConfig, load_config
from .netlist import Netlist, NetlistError, parse

EXIT_OK, EXIT_PARSE, EXIT_DOMAIN, EXIT_SINGULAR, EXIT_MC, EXIT_BEM = 0, 2, 3, 4, 5, 6

STAGE_ALIASES = {"bare": "bare", "biastee": "biastee", "+biastee": "biastee", "trap": "trap", "+trap": "trap"}
SCAN_ALIASES = {"rf": "rf_amplitude", "rf_amplitude": "rf_amplitude",
                "endcap": "endcap_voltage", "endcap_voltage": "endcap_voltage"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- helpers

def _clean(x):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output_dir or ".")


def _stage(token: str) -> str:
    try:
        return STAGE_ALIASES[token]
    except KeyError:
        raise CliError(EXIT_PARSE, f"--stage: unknown stage {token!r}; choose from {sorted(STAGE_ALIASES)}")


def _read_netlist(path: Optional[str], cfg: RunConfig, stage: Optional[str]) -> Netlist:
    """Netlist from a file (or bundled corpus name), else derived from the config."""
    if path:
        p = Path(path)
        if p.exists():
            text = p.read_text()
        elif path in corpus.FILES:
            text = corpus.load(path)
        else:
            raise CliError(EXIT_PARSE, f"{path}: no such file")
        try:
            n = parse(text, require_sweep=True)
        except NetlistError as exc:
            raise CliError(EXIT_PARSE, f"{path}: {exc}")
        return geo.stage_netlist(n, stage) if stage else n
    if "M_f" not in cfg.circuit.overrides:
        raise CliError(EXIT_DOMAIN, "circuit.overrides.M_f: feed coupling has no geometric model; supply it")
    return geo.derive_circuit(cfg.circuit_inputs(), stage=stage or cfg.circuit.stage,
                              sweep=cfg.sweep_spec()).netlist


def _config(args) -> RunConfig:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise CliError(EXIT_PARSE, f"config: {exc}")
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"config: {exc}")


# ---------------------------------------------------------------- params

def params_report(cfg: RunConfig) -> dict:
    try:
        rec = geo.derive_values(cfg.circuit_inputs())
    except geo.GeometryDomainError as exc:
        raise CliError(EXIT_DOMAIN, f"geometry: {exc}")
    derived, catalog = [], []
    for sym in sorted(rec):
        r = rec[sym]
        row = {"symbol": r.symbol, "value": r.value, "unit": r.unit, "formula": r.formula,
               "inputs": dict(r.inputs),
               "provenance": "override (measured)" if r.provenance == "override" else r.provenance}
        (catalog if r.provenance == "catalog" else derived).append(row)
    return {"values": derived, "catalog": catalog}


def cmd_params(args) -> int:
    cfg = _config(args)
    rep = params_report(cfg)
    p = _write(_out_dir(args, cfg), "params.json", dumps(rep))
    for row in rep["values"]:
        print(f"{row['symbol']:<10} {row['value']!r:<24} {row['unit']:<4} {row['provenance']:<20} {row['formula']}")
    _log(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------- ac

def sweep_csv(sw: mna.SweepResult, probes: Sequence[str]) -> str:
    z = sw.port_input_impedance
    g = analysis.s11(z, sw.port.reference_impedance) if sw.port else np.full(len(z), np.nan + 0j)
    header = ["f_hz", "re_zin", "im_zin", "s11_mag", "s11_phase_deg"]
    cols = [sw.frequencies, z.real, z.imag, np.abs(g), np.degrees(np.angle(g))]
    for node in probes:
        v = sw.node_voltage(node)
        header += [f"v({node})_mag", f"v({node})_phase_deg"]
        cols += [np.abs(v), np.degrees(np.angle(v))]
    rows = [",".join(header)]
    for vals in zip(*(c.tolist() for c in cols)):
        rows.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(rows) + "\n"


def ac_analysis(n: Netlist) -> tuple[mna.SweepResult, dict]:
    sw = mna.sweep(n)
    res = analysis.find_resonances(sw, netlist=n)
    entries = []
    for r in res:
        sol = mna.solve(n, r.frequency)
        pr = analysis.phase_report(sol, n.probes)
        entries.append({
            "frequency_hz": r.frequency, "s11_magnitude": r.s11_magnitude, "q_factor": r.q_factor,
            "kind": r.kind_hint,
            "phase_deg": {f"{a}-{b}": v for (a, b), v in pr.pair_phase_deg.items()},
            "amplitude_ratio": {f"{a}/{b}": v for (a, b), v in pr.amplitude_ratio.items()},
        })
    return sw, {"title": n.title, "resonances": entries}


def cmd_ac(args) -> int:
    cfg = _config(args)
    stages = [_stage(s) for s in (args.stage or [])] or [None]
    out = _out_dir(args, cfg)
    lowers = []
    for stage in stages:
        n = _read_netlist(args.netlist, cfg, stage)
        try:
            sw, rep = ac_analysis(n)
        except mna.SingularCircuitError as exc:
            raise CliError(EXIT_SINGULAR, f"singular circuit: {exc}")
        d = out / stage if len(stages) > 1 else out
        rep["stage"] = stage
        _write(d, "sweep.csv", sweep_csv(sw, n.probes))
        _write(d, "resonances.json", dumps(rep))
        _log(f"wrote {d / 'sweep.csv'} and {d / 'resonances.json'}")
        label = stage or "netlist"
        if not rep["resonances"]:
            print(f"{label}: no resonance below |S11| 0.9")
            lowers.append(math.nan)
            continue
        for r in rep["resonances"]:
            q = "" if math.isnan(r["q_factor"]) else f" Q={r['q_factor']:.4g}"
            print(f"{label}: {r['kind']:<5} f={r['frequency_hz'] / 1e6:.6f} MHz |S11|={r['s11_magnitude']:.4g}{q}")
        lowers.append(rep["resonances"][0]["frequency_hz"])
    if len(stages) > 1:
        mono = all(b < a for a, b in zip(lowers, lowers[1:]))
        shifts = [b / a - 1 for a, b in zip(lowers, lowers[1:])]
        _write(out, "stages.json", dumps({"stages": stages, "lower_resonance_hz": lowers,
                                          "fractional_shifts": shifts, "strictly_decreasing": mono}))
        print("lower resonance strictly decreasing across stages: " + ("yes" if mono else "no"))
    return EXIT_OK


# ---------------------------------------------------------------- mc

def cmd_mc(args) -> int:
    cfg = _config(args)
    n = _read_netlist(args.netlist, cfg, _stage(args.stage[0]) if args.stage else None)
    try:
        spec = cfg.perturbation(args.seed)
        if args.samples is not None:
            spec = replace(spec, samples=args.samples)
        if args.bound is not None:
            spec = replace(spec, relative_bound=args.bound)
    except ValueError as exc:
        raise CliError(EXIT_DOMAIN, f"montecarlo: {exc}")
    nodes = {c.node_a for c in n.components} | {c.node_b for c in n.components}
    pair = ("V1", "V3") if {"V1", "V3"} <= nodes else None
    if pair is None:
        raise CliError(EXIT_DOMAIN, "montecarlo needs the electrode nodes V1 and V3 (trap stage)")
    out = _out_dir(args, cfg)
    code = EXIT_OK
    try:
        rep = montecarlo.run(n, spec, same_phase_pair=pair, bins=cfg.montecarlo.bins,
                             max_failure_fraction=cfg.montecarlo.max_failure_fraction)
    except montecarlo.McFailure as exc:
        rep = exc.report
        _log(f"Monte-Carlo failure: {exc}")
        code = EXIT_MC
    _write(out, "mc_report.json", dumps(rep.to_dict()))
    _write(out, "mc_histogram.csv", rep.histogram_csv())
    _log(f"wrote {out / 'mc_report.json'} and {out / 'mc_histogram.csv'}")
    f = rep.f_lower
    print(f"f_lower = {f.mean / 1e6:.6f} +- {f.std / 1e6:.6f} MHz over {rep.samples - rep.failed_samples} samples"
          + (" (null variance)" if f.null_variance else ""))
    print(f"max |dphi_opp| = {rep.delta_phi_opp.max_abs!r} deg, median {rep.delta_phi_opp.median_abs!r} deg")
    return code


# ---------------------------------------------------------------- trap

def _parse_scan(token: str) -> tuple[str, float]:
    kind, _, value = token.partition(":")
    if kind not in SCAN_ALIASES or not value:
        raise CliError(EXIT_PARSE, f"--interpret: expected rf:<Hz> or endcap:<Hz>, got {token!r}")
    try:
        f = float(value)
    except ValueError:
        raise CliError(EXIT_PARSE, f"--interpret: bad frequency in {token!r}")
    return SCAN_ALIASES[kind], f


def interpretation_table(tokens: Sequence[str]) -> list[dict]:
    from .trapfield import interpret_scans
    try:
        rows = interpret_scans([_parse_scan(t) for t in tokens])
    except ValueError as exc:
        raise CliError(EXIT_DOMAIN, f"--interpret: {exc}")
    return [{"modulation": r.modulation, "dip_frequency_hz": r.dip_frequency,
             "trap_frequency_hz": r.trap_frequency, "coincides_with": list(r.coincides_with)} for r in rows]


def _scheme_report(tf, model, drive, ion) -> dict:
    rep: dict = {}
    try:
        s = tf.secular_frequencies(model, drive, ion)
        rep["secular"] = {"frequencies_hz": s.frequencies_hz, "position_m": s.position, "iterations": s.iterations}
    except tf.NoMinimumError as exc:
        rep["secular"] = {"error": str(exc), "unstable_axes": list(exc.unstable_axes)}
    try:
        m = tf.mathieu_parameters(model, drive, ion)
        rep["mathieu"] = {"q": m.q, "a": m.a, "stable": list(m.stable), "laplace_ratio": m.laplace_ratio,
                          "fit_residual": m.fit_residual}
    except tf.PoorFitError as exc:
        rep["mathieu"] = {"error": str(exc)}
    ez = tf.axial_field(model, drive)
    rep["axial_rf_field_v_per_m"] = abs(ez)
    rep["radial_anisotropy"] = tf.anisotropy(model, drive, ion)
    return rep


def cmd_trap(args) -> int:
    from . import trapfield as tf

    cfg = _config(args)
    tokens = list(cfg.trap.interpret) + list(args.interpret or [])
    table = interpretation_table(tokens)
    for r in table:
        print(f"{r['modulation']} dip {r['dip_frequency_hz']!r} Hz -> trap frequency {r['trap_frequency_hz']!r} Hz")
    out = _out_dir(args, cfg)
    if args.interpret_only:
        _write(out, "trap_report.json", dumps({"interpretations": table}))
        return EXIT_OK
    try:
        geom = cfg.trap_geometry()
        drives = {s: cfg.drive(s) for s in ("two_phase", "single_phase")}
        ion = cfg.ion()
    except ValueError as exc:
        raise CliError(EXIT_DOMAIN, f"trap: {exc}")
    try:
        model = tf.build_trap_model(geom)
    except tf.BemError as exc:
        raise CliError(EXIT_BEM, f"field solver: {exc}")
    _log(f"field solve: {model.basis.mesh.size} panels, residual {model.residual:.3g} V, "
         f"cond ~ {model.basis.condition_estimate:.3g}")
    schemes = {}
    for name, drive in drives.items():
        for plane in ("xy", "zr"):
            rows = tf.pseudopotential_map(model, drive, ion, plane=plane, points=cfg.trap.map_points)
            _write(out, f"map_{name}_{plane}.csv", tf.map_csv(rows))
        schemes[name] = _scheme_report(tf, model, drive, ion)
    e2, e1 = schemes["two_phase"]["axial_rf_field_v_per_m"], schemes["single_phase"]["axial_rf_field_v_per_m"]
    floor = 1e-9 * max(e1, 1e-300)
    report = {
        "schemes": schemes,
        "comparison": {
            "axial_suppression": e1 / max(e2, floor),
            "axial_suppression_floored": e2 < floor,
            "anisotropy_two_phase": schemes["two_phase"]["radial_anisotropy"],
            "anisotropy_single_phase": schemes["single_phase"]["radial_anisotropy"],
        },
        "solver": {"panels": model.basis.mesh.size, "residual_v": model.residual,
                   "condition_estimate": model.basis.condition_estimate},
        "interpretations": table,
    }
    _write(out, "trap_report.json", dumps(report))
    _log(f"wrote 4 maps and trap_report.json to {out}")
    c = report["comparison"]
    print(f"axial RF suppression (single/two phase) = {c['axial_suppression']:.4g}")
    print(f"radial anisotropy: two_phase {c['anisotropy_two_phase']:.3g}, single_phase {c['anisotropy_single_phase']:.3g}")
    for name, s in schemes.items():
        if "frequencies_hz" in s["secular"]:
            fx, fy, fz = (v / 1e6 for v in s["secular"]["frequencies_hz"])
            print(f"{name}: secular {fx:.4f}, {fy:.4f}, {fz:.4f} MHz")
        else:
            print(f"{name}: {s['secular']['error']}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: config output_dir or .)")
    common.add_argument("--seed", type=int, help="Monte-Carlo seed")

    p = argparse.ArgumentParser(prog="resodrive", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", parents=[common], help="derived lumped values")
    sp.set_defaults(func=cmd_params)

    sa = sub.add_parser("ac", parents=[common], help="AC sweep, resonances and phases")
    sa.add_argument("netlist", nargs="?", help="netlist file or bundled corpus name (default: derive from config)")
    sa.add_argument("--stage", action="append", metavar="STAGE",
                    help="bare, +biastee or +trap; repeat to compare stages")
    sa.set_defaults(func=cmd_ac)

    sm = sub.add_parser("mc", parents=[common], help="Monte-Carlo tolerance analysis")
    sm.add_argument("netlist", nargs="?", help="netlist file or bundled corpus name (default: derive from config)")
    sm.add_argument("--samples", type=int)
    sm.add_argument("--bound", type=float, help="relative perturbation bound")
    sm.add_argument("--stage", action="append", help=argparse.SUPPRESS)
    sm.set_defaults(func=cmd_mc)

    st = sub.add_parser("trap", parents=[common], help="trap field maps, secular and Mathieu parameters")
    st.add_argument("--interpret", action="append", metavar="KIND:HZ",
                    help="parametric scan dip, e.g. rf:2e6 or endcap:3e5")
    st.add_argument("--interpret-only", action="store_true", help="skip the field solve")
    st.set_defaults(func=cmd_trap)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        _log(f"error: {exc}")
        return exc.code
    except geo.GeometryDomainError as exc:
        _log(f"error: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
