import json

import numpy as np
import pytest

from resilient_evo import diversity
from resilient_evo.diversity import DiversityMode
from resilient_evo.domain import generate_layout, waycosts
from resilient_evo.errors import ConfigError
from resilient_evo.evolution import (
    STATS_HEADER,
    EngineConfig,
    crossover,
    crossover_genomes,
    evaluate,
    init_population,
    make_streams,
    mutate,
    run,
    select_mate,
    select_mates,
    step_generation,
)
from resilient_evo.experiments import make_scenario, run_scenario
from resilient_evo.population import Individual, Population


@pytest.fixture
def layout():
    return generate_layout(5, 5, 500, 500, np.random.default_rng(42))


def test_config_defaults():
    cfg = EngineConfig()
    assert (cfg.population_size, cfg.generations, cfg.change_generation) == (50, 100, 50)
    assert (cfg.mutation_rate, cfg.crossover_rate, cfg.hypermutation_rate) == (0.1, 0.3, 0.1)
    assert cfg.mode is DiversityMode.NONE and cfg.lam == 0.0
    assert cfg.report_metric is DiversityMode.DOMAIN


@pytest.mark.parametrize(
    "overrides",
    [
        {"population_size": 1},
        {"mutation_rate": 1.5},
        {"crossover_rate": -0.1},
        {"generations": 0},
        {"change_generation": 100},
        {"lam": -1.0},
        {"t": 0, "mode": "gen"},
        {"m": 0},
        {"mode": "hamming"},
    ],
)
def test_config_rejects_invalid(overrides):
    with pytest.raises(ConfigError):
        EngineConfig(**overrides)


def test_config_dict_round_trip():
    cfg = EngineConfig(mode="gen", lam=2500, t=32, seed=9)
    data = json.loads(json.dumps(cfg.to_dict()))
    assert EngineConfig.from_dict(data) == cfg
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"bogus": 1})


def test_trash_carried_only_when_needed():
    assert EngineConfig(mode="dom").trash_bits == 0
    assert EngineConfig(mode="gen", t=16).trash_bits == 16
    assert EngineConfig(metric="gen", t=8).trash_bits == 8


def test_init_population_shape():
    cfg = EngineConfig(mode="gen", t=16)
    rng, trng = make_streams(1)
    pop = init_population(cfg, rng, trng)
    assert pop.routes.shape == (50, 5) and pop.trash.shape == (50, 16)
    assert pop.routes.min() >= 0 and pop.routes.max() < 5
    assert set(np.unique(pop.trash)) <= {0, 1}


def test_init_population_single_station():
    cfg = EngineConfig(population_size=10, m=1, mode="dom")
    pop = init_population(cfg, *make_streams(0))
    assert not pop.routes.any()
    assert pop.trash.shape == (10, 0)


def test_mutate_changes_at_most_one_gene_and_flips_one_bit():
    cfg = EngineConfig(mode="gen", t=16)
    rng, trng = make_streams(3)
    parent = Individual((0, 1, 2, 3, 4), tuple([0] * 16))
    for _ in range(200):
        child = mutate(parent, cfg, rng, trng)
        assert sum(a != b for a, b in zip(parent.route, child.route)) <= 1
        assert sum(child.trash) == 1
    assert parent.route == (0, 1, 2, 3, 4)


def test_mutate_without_trash():
    cfg = EngineConfig(mode="dom")
    child = mutate(Individual((0, 1, 2, 3, 4)), cfg, np.random.default_rng(0))
    assert child.trash == ()


def test_crossover_of_clones_is_identity():
    a = Individual((1, 2, 3, 4, 0), (1, 0, 1))
    assert crossover(a, a, np.random.default_rng(0)) == Individual((1, 2, 3, 4, 0), (1, 0, 1))


def test_crossover_genes_come_from_parents():
    a = Individual((0, 0, 0, 0, 0), (0, 0, 0, 0))
    b = Individual((1, 1, 1, 1, 1), (1, 1, 1, 1))
    rng = np.random.default_rng(0)
    for _ in range(100):
        child = crossover(a, b, rng)
        assert set(child.route) <= {0, 1} and set(child.trash) <= {0, 1}


def test_crossover_is_unbiased_per_position():
    k = 10_000
    first = Population(np.zeros((k, 5), dtype=np.int64), np.zeros((k, 8), dtype=np.uint8))
    second = Population(np.ones((k, 5), dtype=np.int64), np.ones((k, 8), dtype=np.uint8))
    rng, trng = make_streams(17)
    child = crossover_genomes(first, second, rng, trng)
    share_from_first = (child.routes == 0).mean(axis=0)
    assert np.all((share_from_first >= 0.45) & (share_from_first <= 0.55))
    bit_share = (child.trash == 0).mean(axis=0)
    assert np.all((bit_share >= 0.45) & (bit_share <= 0.55))


def test_select_mates_prefers_lower_fitness():
    fitness = np.array([5.0, 1.0, 3.0])
    picks = select_mates(fitness, 30_000, np.random.default_rng(0))
    freq = np.bincount(picks, minlength=3) / len(picks)
    # pairs {0,1}->1 {0,2}->2 {1,2}->1 each with probability 1/3
    assert freq[0] == 0
    assert freq[1] == pytest.approx(2 / 3, abs=0.01)
    assert freq[2] == pytest.approx(1 / 3, abs=0.01)


def test_select_mates_ties_go_to_lower_index():
    size = 6
    picks = select_mates(np.zeros(size), 60_000, np.random.default_rng(1))
    freq = np.bincount(picks, minlength=size) / len(picks)
    expected = [2 * (size - 1 - i) / (size * (size - 1)) for i in range(size)]
    assert np.allclose(freq, expected, atol=0.01)


def test_select_mate_needs_evaluation(layout):
    pop = init_population(EngineConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        select_mate(pop, np.random.default_rng(0))
    ev = evaluate(pop, layout, EngineConfig())
    assert pop.index_of(select_mate(ev, np.random.default_rng(0))) >= 0


def test_evaluate_without_diversity_is_waycost(layout):
    pop = init_population(EngineConfig(), np.random.default_rng(0))
    for cfg in (EngineConfig(), EngineConfig(mode="dom", lam=0.0), EngineConfig(mode="none", lam=900.0)):
        ev = evaluate(pop, layout, cfg)
        assert ev.fitness.tolist() == waycosts(pop.routes, layout).astype(float).tolist()


def test_evaluate_adds_scaled_similarity(layout):
    cfg = EngineConfig(mode="dom", lam=1500.0)
    pop = init_population(cfg, np.random.default_rng(0))
    ev = evaluate(pop, layout, cfg)
    norm = diversity.normalized_similarities(pop, DiversityMode.DOMAIN, 5)
    assert np.allclose(ev.fitness, ev.waycost + 1500.0 * norm)


def test_evaluate_clones_get_waycost_plus_lambda(layout):
    for mode in ("dom", "gen"):
        cfg = EngineConfig(mode=mode, lam=2500.0, t=16)
        pop = Population(np.array([[1, 2, 3, 4, 0]] * 7), np.ones((7, cfg.trash_bits), dtype=np.uint8))
        ev = evaluate(pop, layout, cfg)
        assert np.allclose(ev.fitness, ev.waycost + 2500.0)


def test_step_keeps_population_size(layout):
    cfg = EngineConfig(mode="gen", lam=80000.0)
    rng, trng = make_streams(0)
    pop = evaluate(init_population(cfg, rng, trng), layout, cfg)
    survivors, stats = step_generation(pop, layout, cfg, rng, trng, generation=1)
    assert len(survivors) == 50 and survivors.trash.shape == (50, 16)
    assert stats.generation == 1


def test_step_with_all_rates_zero_is_identity(layout):
    cfg = EngineConfig(mutation_rate=0, crossover_rate=0, hypermutation_rate=0)
    rng, trng = make_streams(0)
    pop = evaluate(init_population(cfg, rng, trng), layout, cfg)
    survivors, _ = step_generation(pop, layout, cfg, rng, trng)
    assert sorted(map(tuple, survivors.routes.tolist())) == sorted(map(tuple, pop.routes.tolist()))


def test_best_waycost_never_increases_without_diversity():
    for seed in range(100):
        cfg = EngineConfig(seed=seed, generations=30, change_generation=29)
        layout = generate_layout(5, 5, 500, 500, np.random.default_rng(seed))
        best = run(cfg, layout, layout).series("best_waycost")
        assert np.all(np.diff(best) <= 0)


def test_run_record_rows(layout):
    cfg = EngineConfig(seed=3)
    record = run(cfg, layout, layout)
    assert len(record.stats) == 100
    assert [s.generation for s in record.stats] == list(range(100))
    lines = record.to_csv().splitlines()
    assert lines[0] == ",".join(STATS_HEADER) and len(lines) == 101
    assert record.as_array().shape == (100, 5)


def test_run_is_deterministic():
    cfg = EngineConfig(mode="gen", lam=80000.0, seed=11)
    assert run_scenario(cfg, 5).to_csv() == run_scenario(cfg, 5).to_csv()
    assert run_scenario(cfg, 5).to_csv() != run_scenario(cfg, 6).to_csv()


def test_unchanged_environment_has_no_spike():
    for seed in range(20):
        cfg = EngineConfig(seed=seed)
        layout = make_scenario(cfg, seed).layout
        best = run(cfg, layout, layout).series("best_waycost")
        assert best[50] <= best[49]


def test_change_is_visible_at_change_generation():
    # with every station moved the whole population pays the offset on its first leg
    cfg = EngineConfig(seed=1, change_amount=25)
    sc = make_scenario(cfg, 1)
    best = run(cfg, sc.layout, sc.f2).series("best_waycost")
    assert best[50] >= best[49] + 5000 - 1000


def test_reporting_trash_does_not_touch_route_search():
    scenario_seed = 8
    plain = run_scenario(EngineConfig(seed=4), scenario_seed)
    watched = run_scenario(EngineConfig(seed=4, metric="gen"), scenario_seed)
    assert np.array_equal(plain.series("best_waycost"), watched.series("best_waycost"))
    assert np.array_equal(plain.series("mean_waycost"), watched.series("mean_waycost"))
    assert not np.array_equal(plain.series("mean_diversity"), watched.series("mean_diversity"))


def test_run_rejects_mismatched_layout():
    cfg = EngineConfig()
    small = generate_layout(3, 5, 500, 500, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        run(cfg, small, small)


def test_select_mate_from_pair_takes_fitter():
    pop = Population(np.array([[0, 0], [1, 1]]), waycost=np.array([3, 5]), fitness=np.array([3.0, 5.0]))
    rng = np.random.default_rng(0)
    assert all(select_mate(pop, rng).route == (0, 0) for _ in range(50))
    with pytest.raises(ValueError):
        select_mates(np.array([1.0]), 1, rng)


def test_mutate_single_value_space_is_identity():
    cfg = EngineConfig(n=1, m=1, change_amount=1)
    assert mutate(Individual((0,)), cfg, np.random.default_rng(0)).route == (0,)


def test_stats_recomputable_from_final_population():
    cfg = EngineConfig(mode="dom", lam=8000.0, seed=2)
    record = run_scenario(cfg, 2)
    pop, last = record.final_population, record.stats[-1]
    assert last.best_waycost == pop.waycost.min() <= last.mean_waycost == pytest.approx(pop.waycost.mean())
    divs = diversity.diversities(pop, DiversityMode.DOMAIN, 5)
    assert last.mean_diversity == pytest.approx(divs.mean())
    assert all(0 <= s.mean_diversity <= 1 for s in record.stats)
