"""Accelerator tiles: genome encoding, constraints, energy and execution plans.

A genome pairs ``map_tm`` (tile -> multiplier index, 0-based into the
library) with ``map_lt`` (conv layer -> tile index, 1-based).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

PIPELINED = "pipelined"
POWER_GATED = "power_gated"
ARCHS = (PIPELINED, POWER_GATED)


def normalize_arch(arch: str) -> str:
    a = arch.strip().lower().replace("-", "_")
    if a not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    return a


@dataclass(frozen=True)
class AcceleratorSpec:
    arch: str
    tile_count: int

    def __post_init__(self):
        object.__setattr__(self, "arch", normalize_arch(self.arch))
        if self.tile_count < 1:
            raise ValueError("tile_count must be >= 1")

    def check_layers(self, n_layers: int) -> None:
        if self.tile_count >= n_layers:
            warnings.warn(f"{self.tile_count} tiles for {n_layers} layers; usually there are fewer tiles than layers")


@dataclass(frozen=True, order=True)
class Genome:
    map_tm: tuple[int, ...]
    map_lt: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "map_tm", tuple(int(v) for v in self.map_tm))
        object.__setattr__(self, "map_lt", tuple(int(v) for v in self.map_lt))

    def layer_multipliers(self) -> tuple[int, ...]:
        """Library index used by each layer."""
        return tuple(self.map_tm[t - 1] for t in self.map_lt)

    def text(self) -> str:
        return f"TM:[{','.join(map(str, self.map_tm))}]|LT:[{','.join(map(str, self.map_lt))}]"

    __str__ = text

    @classmethod
    def parse(cls, text: str) -> Genome:
        m = re.fullmatch(r"\s*TM:\[([\d,\s]*)\]\s*\|\s*LT:\[([\d,\s]*)\]\s*", text)
        if not m:
            raise ValueError(f"not a genome: {text!r}")
        tm, lt = ([int(v) for v in g.split(",") if v.strip()] for g in m.groups())
        return cls(tuple(tm), tuple(lt))


def chunks(seq, size):
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def validate(genome: Genome, spec: AcceleratorSpec, n_layers: int, n_mults: int) -> list[str]:
    """Constraint violations as human-readable strings; empty when valid."""
    errs = []
    t = spec.tile_count
    if len(genome.map_tm) != t:
        errs.append(f"map_tm has {len(genome.map_tm)} entries, expected {t}")
    if len(genome.map_lt) != n_layers:
        errs.append(f"map_lt has {len(genome.map_lt)} entries, expected {n_layers}")
    for i, m in enumerate(genome.map_tm):
        if not 0 <= m < n_mults:
            errs.append(f"tile {i + 1} uses multiplier {m}, library has {n_mults}")
    for i, tile in enumerate(genome.map_lt):
        if not 1 <= tile <= t:
            errs.append(f"layer {i + 1} mapped to tile {tile}, valid tiles are 1..{t}")
    if spec.arch == PIPELINED:
        for k, ch in enumerate(chunks(genome.map_lt, t)):
            if len(set(ch)) != len(ch):
                errs.append(f"chunk {k + 1} {list(ch)} repeats a tile")
            elif len(ch) == t and set(ch) != set(range(1, t + 1)):
                errs.append(f"chunk {k + 1} {list(ch)} is not a permutation of 1..{t}")
    return errs


def is_valid(genome: Genome, spec: AcceleratorSpec, n_layers: int, n_mults: int) -> bool:
    return not validate(genome, spec, n_layers, n_mults)


def energy(genome: Genome, mult_counts, library) -> float:
    """Total multiplication energy in pJ: sum of count x per-op energy per layer."""
    total = Fraction(0)
    for count, m in zip(mult_counts, genome.layer_multipliers(), strict=True):
        total += int(count) * Fraction(library[m].energy_pj)
    return float(total)


def count_design_space(n_mults: int, n_tiles: int, n_layers: int, arch: str) -> int:
    if min(n_mults, n_tiles, n_layers) < 1:
        raise ValueError("all arguments must be >= 1")
    arch = normalize_arch(arch)
    tm = n_mults ** n_tiles
    if arch == POWER_GATED:
        return tm * n_tiles ** n_layers
    full, rest = divmod(n_layers, n_tiles)
    return tm * math.factorial(n_tiles) ** full * math.perm(n_tiles, rest)


def uniform_genome(multiplier_index: int, spec: AcceleratorSpec, n_layers: int) -> Genome:
    t = spec.tile_count
    return Genome((multiplier_index,) * t, tuple(i % t + 1 for i in range(n_layers)))


def random_genome(spec: AcceleratorSpec, n_layers: int, n_mults: int, rng: np.random.Generator) -> Genome:
    t = spec.tile_count
    tm = tuple(int(v) for v in rng.integers(0, n_mults, t))
    if spec.arch == POWER_GATED:
        return Genome(tm, tuple(int(v) for v in rng.integers(1, t + 1, n_layers)))
    lt = []
    for ch in chunks(range(n_layers), t):
        lt.extend(int(v) + 1 for v in rng.permutation(t)[:len(ch)])
    return Genome(tm, tuple(lt))


# -- execution plans -------------------------------------------------------

IDLE, OFF, WAKE = "idle", "off", "wake"


@dataclass(frozen=True)
class ExecutionPlan:
    """``steps[s][t]`` is a 0-based layer index, or IDLE / OFF / WAKE."""

    steps: tuple[tuple[int | str, ...], ...]

    @property
    def makespan(self) -> int:
        return len(self.steps)

    def rows(self):
        for s, step in enumerate(self.steps, 1):
            yield [s] + [f"L{c + 1}" if isinstance(c, int) else c for c in step]


def build_plan(genome: Genome, spec: AcceleratorSpec, n_layers: int) -> ExecutionPlan:
    """Step x tile schedule.

    Pipelined: step k runs chunk k, every chunk layer on its own tile while
    the tiles stream consecutive inputs; only a partial last chunk leaves tiles
    idle. Power-gated: one layer per step on its tile with the rest switched
    off; changing the active tile costs one wake-up step.
    """
    n_mults = max(genome.map_tm, default=0) + 1
    errs = validate(genome, spec, n_layers, n_mults)
    if errs:
        raise ValueError("invalid genome: " + "; ".join(errs))
    t = spec.tile_count
    steps = []
    if spec.arch == PIPELINED:
        for k, ch in enumerate(chunks(genome.map_lt, t)):
            row = [IDLE] * t
            for j, tile in enumerate(ch):
                row[tile - 1] = k * t + j
            steps.append(tuple(row))
    else:
        active = None
        for layer, tile in enumerate(genome.map_lt):
            if active is not None and tile != active:
                row = [OFF] * t
                row[tile - 1] = WAKE
                steps.append(tuple(row))
            row = [OFF] * t
            row[tile - 1] = layer
            steps.append(tuple(row))
            active = tile
    return ExecutionPlan(tuple(steps))
