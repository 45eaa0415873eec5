"""NSGA-II search over tile/layer assignments (maximise accuracy, minimise energy)."""

from __future__ import annotations

import csv
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accel
from .accel import AcceleratorSpec, Genome
from .mult import MultiplierModel
from .qnet.cifar import Dataset
from .qnet.engine import count_correct
from .qnet.network import QuantNetwork, count_mults
from .wtune import WeightMap, compute_weight_map

log = logging.getLogger(__name__)


@dataclass
class Candidate:
    genome: Genome
    accuracy: float | None = None
    energy_pj: float | None = None
    front_rank: int = 0
    crowding: float = 0.0

    @property
    def evaluated(self) -> bool:
        return self.accuracy is not None and self.energy_pj is not None

    def objectives(self) -> tuple[float, float]:
        """Both objectives in minimisation form."""
        if not self.evaluated:
            raise ValueError(f"candidate {self.genome} has not been evaluated")
        return (-self.accuracy, self.energy_pj)


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 50
    offspring_size: int = 50
    p_mut: float = 0.10
    iterations: int = 30
    eval_subset: int = 1000
    rng_seed: int = 0
    parent_selection: str = "tournament"  # or "uniform"
    jobs: int = 1

    def __post_init__(self):
        for name in ("population_size", "offspring_size", "eval_subset", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 <= self.p_mut <= 1.0:
            raise ValueError("p_mut must lie in [0, 1]")
        if self.parent_selection not in ("tournament", "uniform"):
            raise ValueError(f"unknown parent_selection {self.parent_selection!r}")


# -- dominance, sorting, crowding -----------------------------------------

def _dominates(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def dominates(c1: Candidate, c2: Candidate) -> bool:
    return _dominates(c1.objectives(), c2.objectives())


def non_dominated_sort(population) -> list[list[int]]:
    """Fronts as lists of population indices, best front first."""
    objs = [c.objectives() for c in population]
    n = len(objs)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if _dominates(objs[i], objs[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif _dominates(objs[j], objs[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(front) -> list[float]:
    objs = [c.objectives() for c in front]
    n = len(objs)
    if n <= 2:
        return [math.inf] * n
    dist = [0.0] * n
    for m in range(len(objs[0])):
        order = sorted(range(n), key=lambda i: (objs[i][m], i))
        lo, hi = objs[order[0]][m], objs[order[-1]][m]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue
        for k in range(1, n - 1):
            dist[order[k]] += (objs[order[k + 1]][m] - objs[order[k - 1]][m]) / (hi - lo)
    return dist


def rank_population(population) -> list[list[int]]:
    """Set front_rank and crowding on every candidate; returns the fronts."""
    fronts = non_dominated_sort(population)
    for r, front in enumerate(fronts, 1):
        members = [population[i] for i in front]
        for c, d in zip(members, crowding_distance(members)):
            c.front_rank, c.crowding = r, d
    return fronts


def select_survivors(pool: list[Candidate], size: int) -> list[Candidate]:
    """Fill by whole fronts, splitting the last one by descending crowding."""
    chosen = []
    for front in rank_population(pool):
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            continue
        rest = sorted(front, key=lambda i: (-pool[i].crowding, i))
        chosen.extend(rest[: size - len(chosen)])
        break
    return [pool[i] for i in sorted(chosen)]


# -- variation operators ---------------------------------------------------

def uniform_crossover(p1: Genome, p2: Genome, spec: AcceleratorSpec, rng: np.random.Generator) -> Genome:
    """Each gene from either parent with equal probability.

    In the pipelined encoding ``map_lt`` is inherited chunk by chunk so every
    chunk stays a permutation.
    """
    t = spec.tile_count
    tm = tuple(a if rng.random() < 0.5 else b for a, b in zip(p1.map_tm, p2.map_tm))
    if spec.arch == accel.POWER_GATED:
        lt = tuple(a if rng.random() < 0.5 else b for a, b in zip(p1.map_lt, p2.map_lt))
    else:
        lt = []
        for ca, cb in zip(accel.chunks(p1.map_lt, t), accel.chunks(p2.map_lt, t)):
            lt.extend(ca if rng.random() < 0.5 else cb)
        lt = tuple(lt)
    return Genome(tm, lt)


def mutate(genome: Genome, spec: AcceleratorSpec, n_mults: int, p_mut: float, rng: np.random.Generator) -> Genome:
    """With probability ``p_mut`` change exactly one gene within its feasible set.

    Pipelined layer genes either swap with another position of their chunk or,
    in a partial chunk, take a tile the chunk does not use yet.
    """
    if rng.random() >= p_mut:
        return genome
    t = spec.tile_count
    tm, lt = list(genome.map_tm), list(genome.map_lt)
    i = int(rng.integers(len(tm) + len(lt)))
    if i < t:
        options = [m for m in range(n_mults) if m != tm[i]]
        if options:
            tm[i] = options[int(rng.integers(len(options)))]
    else:
        j = i - t
        if spec.arch == accel.POWER_GATED:
            options = [v for v in range(1, t + 1) if v != lt[j]]
            if options:
                lt[j] = options[int(rng.integers(len(options)))]
        else:
            start = (j // t) * t
            members = range(start, min(start + t, len(lt)))
            used = {lt[k] for k in members}
            options = [("swap", k) for k in members if k != j]
            options += [("set", v) for v in range(1, t + 1) if v not in used]
            if options:
                op, arg = options[int(rng.integers(len(options)))]
                if op == "swap":
                    lt[j], lt[arg] = lt[arg], lt[j]
                else:
                    lt[j] = arg
    return Genome(tuple(tm), tuple(lt))


def _pick_parent(pop: list[Candidate], mode: str, rng: np.random.Generator) -> Candidate:
    if mode == "uniform":
        return pop[int(rng.integers(len(pop)))]
    a, b = pop[int(rng.integers(len(pop)))], pop[int(rng.integers(len(pop)))]
    if (b.front_rank, -b.crowding) < (a.front_rank, -a.crowding):
        return b
    return a


# -- evaluation ------------------------------------------------------------

class Evaluator:
    """Fitness of genomes, memoised on the layer -> multiplier assignment."""

    def __init__(self, net: QuantNetwork, library, dataset: Dataset, weight_maps=None):
        if not library:
            raise ValueError("multiplier library is empty")
        self.net = net
        self.library: list[MultiplierModel] = list(library)
        self.dataset = dataset
        self.weight_maps: list[WeightMap] = (
            list(weight_maps) if weight_maps is not None else [compute_weight_map(m) for m in self.library]
        )
        for m, wm in zip(self.library, self.weight_maps, strict=True):
            if wm.multiplier_name != m.name:
                raise ValueError(f"weight map {wm.multiplier_name!r} does not match multiplier {m.name!r}")
        self.mult_counts = count_mults(net)
        self.n_layers = len(self.mult_counts)
        self._cache: dict[tuple, int] = {}
        self._lock = threading.Lock()

    def assignment(self, genome: Genome):
        return [(self.library[m], self.weight_maps[m]) for m in genome.layer_multipliers()]

    def energy(self, genome: Genome) -> float:
        return accel.energy(genome, self.mult_counts, self.library)

    def correct(self, genome: Genome, subset: int) -> int:
        key = (subset, genome.layer_multipliers())
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            value = count_correct(self.net, self.dataset, self.assignment(genome), subset)
        except Exception as exc:
            raise RuntimeError(f"evaluation failed for genome {genome}: {exc}") from exc
        with self._lock:
            self._cache[key] = value
        return value

    @property
    def unique_evaluations(self) -> int:
        return len(self._cache)

    def evaluate(self, candidates, subset: int, jobs: int = 1) -> None:
        """Fill in accuracy and energy; results do not depend on ``jobs``."""
        todo, seen = [], set()
        for c in candidates:
            key = (subset, c.genome.layer_multipliers())
            if key not in self._cache and key not in seen:
                seen.add(key)
                todo.append(c.genome)
        if jobs > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(lambda g: self.correct(g, subset), todo))
        else:
            for g in todo:
                self.correct(g, subset)
        for c in candidates:
            c.accuracy = self.correct(c.genome, subset) / subset
            c.energy_pj = self.energy(c.genome)


# -- driver ----------------------------------------------------------------

@dataclass(frozen=True)
class LogRecord:
    generation: int
    genome: Genome
    accuracy_subset: float
    energy_pj: float


@dataclass(frozen=True)
class ArchiveEntry:
    genome: Genome
    accuracy_full: float
    accuracy_subset: float
    energy_pj: float
    front_rank: int
    crowding: float


@dataclass
class ParetoArchive:
    members: list[ArchiveEntry]
    log: list[LogRecord]
    final_population: list[Candidate] = field(default_factory=list)
    unique_evaluations: int = 0

    def write_archive_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["genome", "accuracy_full", "accuracy_subset", "energy_pj", "front_rank", "crowding"])
            for e in self.members:
                w.writerow([e.genome.text(), repr(e.accuracy_full), repr(e.accuracy_subset), repr(e.energy_pj),
                            e.front_rank, repr(e.crowding)])

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "genome", "accuracy_subset", "energy_pj"])
            for r in self.log:
                w.writerow([r.generation, r.genome.text(), repr(r.accuracy_subset), repr(r.energy_pj)])


def run_nsga2(cfg: SearchConfig, spec: AcceleratorSpec, net: QuantNetwork, library, dataset: Dataset,
              weight_maps=None, on_generation=None) -> ParetoArchive:
    """Seed with one uniform genome per multiplier, evolve, then re-score on the full dataset.

    The archive keeps one genome per distinct (accuracy, energy) point, the smallest in sort order.

    ``on_generation(g, combined, survivors)`` is called after each selection.
    """
    ev = Evaluator(net, library, dataset, weight_maps)
    n_layers, n_mults = ev.n_layers, len(ev.library)
    spec.check_layers(n_layers)
    subset = cfg.eval_subset
    if subset > len(dataset):
        log.warning("eval_subset %d exceeds dataset size %d; using the whole dataset", subset, len(dataset))
        subset = len(dataset)
    records: list[LogRecord] = []

    def evaluate(cands, gen):
        ev.evaluate(cands, subset, cfg.jobs)
        records.extend(LogRecord(gen, c.genome, c.accuracy, c.energy_pj) for c in cands)

    pop = [Candidate(accel.uniform_genome(i, spec, n_layers)) for i in range(n_mults)]
    evaluate(pop, 0)
    for gen in range(1, cfg.iterations + 1):
        rank_population(pop)
        seeds = np.random.SeedSequence([cfg.rng_seed, gen]).spawn(cfg.offspring_size)
        offspring = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            p1 = _pick_parent(pop, cfg.parent_selection, rng)
            p2 = _pick_parent(pop, cfg.parent_selection, rng)
            child = uniform_crossover(p1.genome, p2.genome, spec, rng)
            offspring.append(Candidate(mutate(child, spec, n_mults, cfg.p_mut, rng)))
        evaluate(offspring, gen)
        combined = pop + offspring
        pop = select_survivors(combined, cfg.population_size)
        if on_generation is not None:
            on_generation(gen, combined, pop)
        log.info("generation %d: %d unique evaluations, front 1 size %d", gen, ev.unique_evaluations,
                 sum(c.front_rank == 1 for c in pop))

    rank_population(pop)
    subset_acc = {c.genome: c.accuracy for c in pop}
    unique = [Candidate(g) for g in dict.fromkeys(c.genome for c in pop)]
    ev.evaluate(unique, len(dataset), cfg.jobs)
    fronts = rank_population(unique)
    members = sorted(
        (ArchiveEntry(c.genome, c.accuracy, subset_acc[c.genome], c.energy_pj, c.front_rank, c.crowding)
         for c in (unique[i] for i in fronts[0])),
        key=lambda e: (e.energy_pj, -e.accuracy_full, e.genome),
    )
    # genomes landing on the same objective point collapse to one row
    first = {}
    for e in members:
        first.setdefault((e.accuracy_full, e.energy_pj), e)
    members = list(first.values())
    return ParetoArchive(members, records, pop, ev.unique_evaluations)
