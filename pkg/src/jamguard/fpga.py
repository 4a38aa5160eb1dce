"""Literature-based FPGA footprint projections for clause-parallel
inference on a Zynq-7000 class part.

LUT cost uses a 30-60 LUTs-per-clause envelope with shared logic and
RAM-stored automata.  Throughput is clock * efficiency divided by
(patches per sample * cycles per patch); the cycles-per-patch numbers
are NOT derived from first principles, they are per-profile calibration
fits chosen so the projected ranges bracket previously reported
kSamples/s figures.  Everything here is a projection, never a
measurement.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_CLOCK_HZ = 100e6
DEFAULT_EFFICIENCY = 0.8
DEFAULT_PATCHES_PER_SAMPLE = 8281  # (100-10+1)^2 for the standard geometry
LUTS_PER_CLAUSE = (30, 60)


@dataclass(frozen=True)
class CyclesModel:
    """Calibrated cycles-per-patch interval (best, worst)."""

    cycles_min: float
    cycles_max: float

    def __post_init__(self):
        if self.cycles_min <= 0 or self.cycles_max < self.cycles_min:
            raise ValueError("need 0 < cycles_min <= cycles_max")


# Reverse-engineered fits: chosen so the throughput intervals bracket the
# published 1.0-2.5k / 2.0-4.6k / 1.1-2.5k samples/s at 100 MHz, 80 %
# efficiency, 8281 patches per sample.
PROFILE_CYCLES = {
    "power": CyclesModel(3.80, 9.70),
    "latency": CyclesModel(2.05, 4.85),
    "accuracy": CyclesModel(3.80, 8.80),
}

PROFILE_CLAUSES = {"power": 256, "latency": 512, "accuracy": 800}


@dataclass
class FpgaProfile:
    name: str
    clauses: int
    lut_low: int
    lut_high: int
    clock_hz: float
    efficiency: float
    samples_low: float
    samples_high: float


def project_luts(clauses: int, per_clause: tuple[int, int] = LUTS_PER_CLAUSE
                 ) -> tuple[int, int]:
    """(low, high) LUT envelope, linear in the clause count."""
    if clauses < 1:
        raise ValueError("clauses must be >= 1")
    low, high = per_clause
    return clauses * low, clauses * high


def project_throughput(clauses: int, clock_hz: float = DEFAULT_CLOCK_HZ,
                       efficiency: float = DEFAULT_EFFICIENCY,
                       patches_per_sample: int = DEFAULT_PATCHES_PER_SAMPLE,
                       cycles_model: CyclesModel | None = None
                       ) -> tuple[float, float]:
    """(low, high) samples/s under the given cycles-per-patch model.

    samples/s = clock * efficiency / (patches_per_sample * cycles_per_patch),
    evaluated at the model's worst and best cycle counts.  ``clauses`` is
    accepted for symmetry with :func:`project_luts`; its influence is
    folded into the calibrated cycles model.
    """
    if clauses < 1:
        raise ValueError("clauses must be >= 1")
    if clock_hz <= 0 or patches_per_sample <= 0:
        raise ValueError("clock_hz and patches_per_sample must be positive")
    if not 0.0 < efficiency <= 1.0:
        raise ValueError("efficiency must be in (0, 1]")
    if cycles_model is None:
        cycles_model = CyclesModel(1.0, 1.0)
    base = clock_hz * efficiency / patches_per_sample
    return base / cycles_model.cycles_max, base / cycles_model.cycles_min


def emit_profiles(clock_hz: float = DEFAULT_CLOCK_HZ,
                  efficiency: float = DEFAULT_EFFICIENCY,
                  patches_per_sample: int = DEFAULT_PATCHES_PER_SAMPLE
                  ) -> list[FpgaProfile]:
    """The three deployment profiles with LUT and throughput ranges."""
    profiles = []
    for name in ("power", "latency", "accuracy"):
        clauses = PROFILE_CLAUSES[name]
        lut_low, lut_high = project_luts(clauses)
        s_low, s_high = project_throughput(
            clauses, clock_hz=clock_hz, efficiency=efficiency,
            patches_per_sample=patches_per_sample,
            cycles_model=PROFILE_CYCLES[name])
        profiles.append(FpgaProfile(
            name=name, clauses=clauses, lut_low=lut_low, lut_high=lut_high,
            clock_hz=clock_hz, efficiency=efficiency,
            samples_low=s_low, samples_high=s_high))
    return profiles


def profiles_text(profiles: list[FpgaProfile]) -> str:
    lines = [
        "FPGA inference footprint projection (literature-based projection only,",
        "no measurements)",
        "",
        f"{'profile':<10} {'clauses':>7} {'LUTs':>16} {'samples/s':>18}",
    ]
    for p in profiles:
        lines.append(f"{p.name:<10} {p.clauses:>7d} "
                     f"{p.lut_low:>7d}-{p.lut_high:<8d} "
                     f"{p.samples_low:>8.0f}-{p.samples_high:<9.0f}")
    return "\n".join(lines) + "\n"


def profiles_csv(profiles: list[FpgaProfile]) -> str:
    lines = ["profile,clauses,lut_low,lut_high,clock_hz,efficiency,"
             "samples_low,samples_high,status"]
    for p in profiles:
        lines.append(f"{p.name},{p.clauses},{p.lut_low},{p.lut_high},"
                     f"{p.clock_hz:.0f},{p.efficiency},"
                     f"{p.samples_low:.1f},{p.samples_high:.1f},projection")
    return "\n".join(lines) + "\n"
