import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axdse.accel import AcceleratorSpec, Genome, random_genome, uniform_genome, validate
from axdse.mult import make_constant, make_exact, make_truncated
from axdse.qnet import exact_assignment, reference_predict
from axdse.search import (
    Candidate,
    Evaluator,
    SearchConfig,
    crowding_distance,
    dominates,
    mutate,
    non_dominated_sort,
    run_nsga2,
    select_survivors,
    uniform_crossover,
)

G0 = Genome((0,), (1,))


def cand(acc, e):
    return Candidate(G0, acc, e)


def naive_fronts(cands):
    """Peel off non-dominated sets one at a time."""
    remaining = list(range(len(cands)))
    fronts = []
    while remaining:
        front = [i for i in remaining if not any(dominates(cands[j], cands[i]) for j in remaining if j != i)]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def test_dominates_examples():
    assert dominates(cand(0.9, 100), cand(0.8, 120))
    assert not dominates(cand(0.9, 100), cand(0.9, 100))
    assert not dominates(cand(0.9, 100), cand(0.95, 90))
    assert dominates(cand(0.95, 90), cand(0.9, 100))
    with pytest.raises(ValueError):
        dominates(Candidate(G0), cand(0.5, 1))


def test_sort_examples():
    assert non_dominated_sort([cand(0.5, 1)]) == [[0]]
    pts = [cand(0.9, 100), cand(0.8, 90), cand(0.7, 80), cand(0.85, 120)]
    assert [sorted(f) for f in non_dominated_sort(pts)] == [[0, 1, 2], [3]]


@pytest.mark.parametrize("seed", range(20))
def test_sort_matches_naive(seed):
    rng = np.random.default_rng(seed)
    # coarse grids force plenty of ties
    pts = [cand(rng.integers(0, 8) / 8, float(rng.integers(0, 8))) for _ in range(30)]
    assert [sorted(f) for f in non_dominated_sort(pts)] == naive_fronts(pts)


def test_crowding_small_fronts():
    assert crowding_distance([cand(0.5, 1)]) == [math.inf]
    assert crowding_distance([cand(0.5, 1), cand(0.6, 2)]) == [math.inf, math.inf]


def test_crowding_evenly_spaced():
    d = crowding_distance([cand(0.1, 10), cand(0.2, 20), cand(0.3, 30)])
    assert d[0] == d[2] == math.inf
    assert d[1] == pytest.approx(2.0)


def test_crowding_duplicates_finite():
    d = crowding_distance([cand(0.5, 5)] * 4)
    assert all(not math.isnan(x) for x in d)
    assert d[1] == d[2] == 0.0


def test_crowding_hand_values():
    # accuracies 0.1, 0.3, 0.4, 0.9 on a front with energies rising alongside
    d = crowding_distance([cand(0.1, 1), cand(0.3, 3), cand(0.4, 4), cand(0.9, 9)])
    assert d[1] == pytest.approx((0.4 - 0.1) / 0.8 + (4 - 1) / 8)
    assert d[2] == pytest.approx((0.9 - 0.3) / 0.8 + (9 - 3) / 8)


def test_select_survivors_keeps_best_fronts():
    pts = [cand(0.9, 100), cand(0.8, 90), cand(0.7, 80), cand(0.85, 120), cand(0.1, 200)]
    chosen = select_survivors(pts, 4)
    assert [c.energy_pj for c in chosen] == [100, 90, 80, 120]
    chosen = select_survivors(pts, 2)
    assert {c.energy_pj for c in chosen} == {100, 80}  # boundary points of the split front


PIPE = AcceleratorSpec("pipelined", 3)
GATE = AcceleratorSpec("power_gated", 3)


def test_crossover_identical_parents(rng):
    for spec in (PIPE, GATE):
        g = random_genome(spec, 8, 5, rng)
        assert uniform_crossover(g, g, spec, rng) == g


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_crossover_power_gated_provenance(seed):
    rng = np.random.default_rng(seed)
    p1, p2 = random_genome(GATE, 8, 5, rng), random_genome(GATE, 8, 5, rng)
    child = uniform_crossover(p1, p2, GATE, rng)
    assert all(c in (a, b) for c, a, b in zip(child.map_tm, p1.map_tm, p2.map_tm))
    assert all(c in (a, b) for c, a, b in zip(child.map_lt, p1.map_lt, p2.map_lt))


def test_crossover_mixes_both_parents():
    rng = np.random.default_rng(0)
    p1, p2 = Genome((0, 0, 0), (1, 2, 3) * 3), Genome((1, 1, 1), (3, 2, 1) * 3)
    kids = [uniform_crossover(p1, p2, PIPE, rng) for _ in range(200)]
    frac = np.mean([k.map_tm[0] for k in kids])
    assert 0.35 < frac < 0.65


@pytest.mark.parametrize("spec", [PIPE, GATE, AcceleratorSpec("pipelined", 4)], ids=str)
def test_operators_stay_valid(spec):
    rng = np.random.default_rng(7)
    n_layers, n_mults = 11, 6
    for _ in range(10_000):
        p1, p2 = random_genome(spec, n_layers, n_mults, rng), random_genome(spec, n_layers, n_mults, rng)
        child = mutate(uniform_crossover(p1, p2, spec, rng), spec, n_mults, 0.5, rng)
        assert not validate(child, spec, n_layers, n_mults)


def test_mutate_zero_probability(rng):
    g = random_genome(GATE, 7, 4, rng)
    assert all(mutate(g, GATE, 4, 0.0, rng) == g for _ in range(100))


def _hamming(a, b):
    return sum(x != y for x, y in zip(a.map_tm + a.map_lt, b.map_tm + b.map_lt))


def test_mutate_power_gated_one_gene(rng):
    for _ in range(2000):
        g = random_genome(GATE, 7, 4, rng)
        assert _hamming(g, mutate(g, GATE, 4, 1.0, rng)) == 1


def test_mutate_pipelined_swaps_within_chunk(rng):
    for _ in range(2000):
        g = random_genome(PIPE, 9, 4, rng)
        m = mutate(g, PIPE, 4, 1.0, rng)
        assert not validate(m, PIPE, 9, 4)
        if m.map_lt != g.map_lt:
            diff = [i for i in range(9) if m.map_lt[i] != g.map_lt[i]]
            assert len(diff) == 2 and diff[0] // 3 == diff[1] // 3


def test_mutation_rate(rng):
    g = random_genome(GATE, 7, 4, rng)
    changed = np.mean([mutate(g, GATE, 4, 0.1, rng) != g for _ in range(5000)])
    assert 0.08 < changed < 0.12


def test_config_validation():
    assert SearchConfig() == SearchConfig(50, 50, 0.10, 30, 1000, 0)
    with pytest.raises(ValueError):
        SearchConfig(p_mut=1.5)
    with pytest.raises(ValueError):
        SearchConfig(population_size=0)
    with pytest.raises(ValueError):
        SearchConfig(parent_selection="roulette")


# -- full runs ---------------------------------------------------------------

SMALL = SearchConfig(population_size=12, offspring_size=12, iterations=4, eval_subset=40, rng_seed=3)


def test_degenerate_exact_library(toy_net, test_records):
    lib = [make_exact(8, 2.0, "exact")]
    data = test_records.head(60)
    arch = run_nsga2(SMALL, AcceleratorSpec("power_gated", 2), toy_net, lib, data)
    assert len(arch.members) == 1
    m = arch.members[0]
    assert m.genome.layer_multipliers() == (0, 0, 0)
    assert m.genome == Genome((0, 0), (1, 1, 1))  # smallest genome on the point
    ref = np.mean(reference_predict(toy_net, data.images) == data.labels)
    assert m.accuracy_full == ref
    assert m.energy_pj == 2.0 * sum(Evaluator(toy_net, lib, data).mult_counts)


def test_exact_plus_zero_library(toy_net, test_records):
    lib = [make_exact(8, 2.0, "exact"), make_constant(8, 0, 0.0, "zero")]
    data = test_records.head(60)
    arch = run_nsga2(SMALL, AcceleratorSpec("power_gated", 2), toy_net, lib, data)
    uniform_exact = uniform_genome(0, AcceleratorSpec("power_gated", 2), 3)
    assert any(m.genome.layer_multipliers() == uniform_exact.layer_multipliers() for m in arch.members)
    for m in arch.members:
        if set(m.genome.layer_multipliers()) == {1}:
            assert m.energy_pj == 0.0 and m.accuracy_full <= 0.3
    cands = [Candidate(m.genome, m.accuracy_full, m.energy_pj) for m in arch.members]
    assert not any(dominates(a, b) for a in cands for b in cands)


def test_evaluation_log_and_cache(toy_net, test_records, desk_library):
    cfg = SearchConfig(population_size=6, offspring_size=5, iterations=3, eval_subset=30, rng_seed=1)
    arch = run_nsga2(cfg, AcceleratorSpec("pipelined", 2), toy_net, desk_library, test_records.head(30))
    assert len(arch.log) == len(desk_library) + 3 * 5
    assert [r.generation for r in arch.log[:4]] == [0] * 4
    assert arch.unique_evaluations <= len(arch.log) + len(arch.members)


def test_seed_determinism_and_jobs(toy_net, test_records, desk_library, tmp_path):
    spec = AcceleratorSpec("power_gated", 2)
    data = test_records.head(50)
    outs = []
    for jobs in (1, 3):
        cfg = SearchConfig(population_size=10, offspring_size=8, iterations=3, eval_subset=30, rng_seed=5, jobs=jobs)
        arch = run_nsga2(cfg, spec, toy_net, desk_library, data)
        arch.write_archive_csv(tmp_path / f"a{jobs}.csv")
        arch.write_log_csv(tmp_path / f"l{jobs}.csv")
        outs.append(((tmp_path / f"a{jobs}.csv").read_text(), (tmp_path / f"l{jobs}.csv").read_text()))
    assert outs[0] == outs[1]
    cfg = SearchConfig(population_size=10, offspring_size=8, iterations=3, eval_subset=30, rng_seed=6)
    run_nsga2(cfg, spec, toy_net, desk_library, data).write_log_csv(tmp_path / "other.csv")
    assert (tmp_path / "other.csv").read_text() != outs[0][1]


def test_elitism_each_generation(toy_net, test_records, desk_library):
    def check(gen, combined, survivors):
        assert max(c.accuracy for c in survivors) == max(c.accuracy for c in combined)
        assert min(c.energy_pj for c in survivors) == min(c.energy_pj for c in combined)
        assert len(survivors) == min(len(combined), 8)

    cfg = SearchConfig(population_size=8, offspring_size=8, iterations=4, eval_subset=30, rng_seed=2)
    run_nsga2(cfg, AcceleratorSpec("pipelined", 2), toy_net, desk_library, test_records.head(30), on_generation=check)


def test_uniform_parent_selection(toy_net, test_records, desk_library):
    cfg = SearchConfig(population_size=6, offspring_size=6, iterations=2, eval_subset=20, parent_selection="uniform")
    arch = run_nsga2(cfg, AcceleratorSpec("power_gated", 2), toy_net, desk_library, test_records.head(20))
    assert arch.members


@pytest.mark.parametrize("arch_name", ["pipelined", "power_gated"])
def test_archive_matches_exhaustive_enumeration(toy_net, test_records, arch_name):
    spec = AcceleratorSpec(arch_name, 2)
    lib = [make_exact(8, 1.0, "exact"), make_truncated(8, 5, energy_pj=0.4, name="trunc_op5")]
    data = test_records.head(60)
    ev = Evaluator(toy_net, lib, data)
    every = []
    for tm in itertools.product(range(2), repeat=2):
        for lt in itertools.product((1, 2), repeat=3):
            g = Genome(tm, lt)
            if not validate(g, spec, 3, 2):
                every.append(Candidate(g))
    ev.evaluate(every, len(data))
    truth = {(c.accuracy, c.energy_pj) for c in every if not any(dominates(o, c) for o in every)}
    cfg = SearchConfig(population_size=20, offspring_size=20, iterations=30, eval_subset=len(data), rng_seed=0)
    arch = run_nsga2(cfg, spec, toy_net, lib, data)
    assert {(m.accuracy_full, m.energy_pj) for m in arch.members} == truth


def test_evaluator_rejects_mismatched_maps(toy_net, test_records):
    from axdse.wtune import identity_map

    lib = [make_exact(8)]
    with pytest.raises(ValueError):
        Evaluator(toy_net, lib, test_records, [identity_map(make_constant(8))])
    with pytest.raises(ValueError):
        Evaluator(toy_net, [], test_records)


def test_evaluator_uses_tuned_weights(fixture_net, test_records):
    from axdse.qnet import evaluate_accuracy
    from axdse.wtune import compute_weight_map

    m = make_truncated(8, 4)
    ev = Evaluator(fixture_net, [m], test_records)
    c = Candidate(uniform_genome(0, AcceleratorSpec("pipelined", 2), 4))
    ev.evaluate([c], 50)
    assert c.accuracy == evaluate_accuracy(fixture_net, test_records, [(m, compute_weight_map(m))] * 4, 50)
    assert c.accuracy != evaluate_accuracy(fixture_net, test_records, exact_assignment(fixture_net, m), 50)
