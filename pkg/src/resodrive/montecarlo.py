"""Monte-Carlo tolerance analysis of the lower resonance and electrode phases."""

from __future__ import annotations

import fnmatch
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import mna
from .analysis import lower_resonance, phase_between, wrap_deg
from .netlist import Netlist

K_LIMIT = 1 - 1e-9


class McFailure(RuntimeError):
    def __init__(self, message: str, report: "McReport"):
        self.report = report
        super().__init__(message)


@dataclass(frozen=True)
class PerturbationSpec:
    relative_bound: float = 0.10
    distribution: str = "uniform"  # or "normal-truncated"
    included_components: tuple[str, ...] = ("*",)  # fnmatch patterns over element names
    samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.relative_bound < 1:
            raise ValueError("relative_bound must lie in [0, 1)")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.distribution not in ("uniform", "normal-truncated"):
            raise ValueError("distribution must be 'uniform' or 'normal-truncated'")

    def includes(self, name: str) -> bool:
        return any(fnmatch.fnmatchcase(name, pat) for pat in self.included_components)


def _draw(spec: PerturbationSpec, sample_index: int, name: str) -> float:
    # keyed per (seed, sample, element) so adding elements never reshuffles others
    ss = np.random.SeedSequence([spec.seed & (2**64 - 1), sample_index, zlib.crc32(name.encode())])
    rng = np.random.Generator(np.random.Philox(ss))
    b = spec.relative_bound
    if spec.distribution == "uniform":
        return float(rng.uniform(-b, b))
    # normal with 3 sigma at the bound, truncated by rejection
    while True:
        e = float(rng.normal(0.0, b / 3))
        if abs(e) <= b:
            return e


def perturb(n: Netlist, spec: PerturbationSpec, sample_index: int) -> Netlist:
    """Scale each included value by (1 + eps), eps i.i.d. within +-relative_bound."""
    if spec.relative_bound == 0:
        return n
    new = {}
    for name, value in n.values().items():
        if not spec.includes(name):
            continue
        v = value * (1 + _draw(spec, sample_index, name))
        if name in {k.name for k in n.couplings}:
            v = min(max(v, -K_LIMIT), K_LIMIT)
        new[name] = v
    return n.with_values(new)


@dataclass(frozen=True)
class Stats:
    mean: float
    std: float
    min: float
    max: float
    median_abs: float
    max_abs: float
    null_variance: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _stats(x: Sequence[float]) -> Stats:
    n = len(x)
    if n == 0:
        nan = math.nan
        return Stats(nan, nan, nan, nan, nan, nan, True)
    mean = math.fsum(x) / n
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1) if n > 1 else 0.0
    arr = np.sort(np.asarray(x, dtype=float))
    absx = np.sort(np.abs(arr))
    return Stats(mean, math.sqrt(var), float(arr[0]), float(arr[-1]),
                 float(np.median(absx)), float(absx[-1]), n == 1 or var == 0.0)


@dataclass(frozen=True)
class SampleResult:
    index: int
    f_lower: float = math.nan
    delta_phi_opp: float = math.nan
    delta_phi_out: float = math.nan
    widened: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class McReport:
    f_lower: Stats
    delta_phi_opp: Stats
    delta_phi_out: Stats
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
    samples: int
    failed_samples: int
    failure_reasons: dict = field(default_factory=dict)
    widened_windows: int = 0
    spec: Optional[PerturbationSpec] = None

    def to_dict(self) -> dict:
        out = {
            "samples": self.samples,
            "successful_samples": self.samples - self.failed_samples,
            "failed_samples": self.failed_samples,
            "failure_reasons": dict(sorted(self.failure_reasons.items())),
            "widened_windows": self.widened_windows,
            "f_lower_hz": self.f_lower.to_dict(),
            "delta_phi_opp_deg": self.delta_phi_opp.to_dict(),
            "output_antiphase_error_deg": self.delta_phi_out.to_dict(),
            "histogram": {"edges_hz": list(self.histogram_edges), "counts": list(self.histogram_counts)},
        }
        if self.spec is not None:
            out["spec"] = {
                "relative_bound": self.spec.relative_bound,
                "distribution": self.spec.distribution,
                "included_components": list(self.spec.included_components),
                "samples": self.spec.samples,
                "seed": self.spec.seed,
            }
        return out

    def histogram_csv(self) -> str:
        rows = ["bin_lo_hz,bin_hi_hz,count"]
        e = self.histogram_edges
        for i, c in enumerate(self.histogram_counts):
            rows.append(f"{e[i]!r},{e[i + 1]!r},{c}")
        return "\n".join(rows) + "\n"


def _one_sample(n: Netlist, spec: PerturbationSpec, i: int, window: tuple[float, float],
                same_pair: tuple[str, str], out_pair: tuple[str, str]) -> SampleResult:
    m = perturb(n, spec, i)
    f_lo, f_hi = window
    widened = False
    try:
        try:
            res = lower_resonance(m, f_min=f_lo, f_max=f_hi)
        except LookupError:
            widened = True
            half = f_hi - f_lo
            res = lower_resonance(m, f_min=max(f_lo - half, 0.0), f_max=f_hi + half)
        sol = mna.solve(m, res.frequency)
        # outputs are reported as their deviation from exact antiphase
        return SampleResult(i, res.frequency, phase_between(sol, *same_pair),
                            wrap_deg(phase_between(sol, *out_pair) - 180.0), widened)
    except LookupError:
        return SampleResult(i, widened=widened, error="resonance outside window")
    except Exception as exc:  # recorded per sample, never fatal on its own
        return SampleResult(i, widened=widened, error=type(exc).__name__)


def run(
    n: Netlist,
    spec: PerturbationSpec = PerturbationSpec(),
    *,
    same_phase_pair: tuple[str, str] = ("V1", "V3"),
    output_pair: tuple[str, str] = ("N1", "N2"),
    bins: int = 30,
    max_failure_fraction: float = 0.10,
) -> McReport:
    """Perturb, locate the lower resonance and measure electrode phases per sample."""
    if not n.ports:
        raise ValueError("netlist needs a .port")
    if n.sweep is None:
        raise ValueError("netlist needs an .ac window around the lower resonance")
    window = (n.sweep.f_start, n.sweep.f_stop)
    work = lambda i: _one_sample(n, spec, i, window, same_phase_pair, output_pair)
    threads = mna.thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(spec.samples)))
    else:
        results = [work(i) for i in range(spec.samples)]

    ok = [r for r in results if r.error is None]
    reasons: dict[str, int] = {}
    for r in results:
        if r.error is not None:
            reasons[r.error] = reasons.get(r.error, 0) + 1
    f = [r.f_lower for r in ok]
    if f:
        lo, hi = min(f), max(f)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(f, bins=bins, range=(lo, hi))
    else:
        counts, edges = np.zeros(0, dtype=int), np.zeros(0)
    report = McReport(
        f_lower=_stats(f),
        delta_phi_opp=_stats([r.delta_phi_opp for r in ok]),
        delta_phi_out=_stats([r.delta_phi_out for r in ok]),
        histogram_edges=tuple(float(e) for e in edges),
        histogram_counts=tuple(int(c) for c in counts),
        samples=spec.samples,
        failed_samples=len(results) - len(ok),
        failure_reasons=reasons,
        widened_windows=sum(r.widened for r in results),
        spec=spec,
    )
    if report.failed_samples > max_failure_fraction * spec.samples:
        raise McFailure(f"{report.failed_samples} of {spec.samples} samples failed", report)
    return report
