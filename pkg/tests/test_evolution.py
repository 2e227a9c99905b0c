import json
from dataclasses import replace

import numpy as np
import pytest

from evobrain.chain import neutral_params
from evobrain.evolution import (EvalResult, Evolution, ExperimentConfig, _rank, evaluate_genome, fitness,
                                load_population, offspring_counts, openings, read_log, run_experiment)
from evobrain.games import play_game
from evobrain.neat import random_brain

TINY = ExperimentConfig(population=4, generations=2, games=2, ply_cap=30, seed=3)


def test_fitness_examples():
    assert fitness(0.5, 0.5, 0.5) == pytest.approx(0.5)
    assert fitness(1.0, 0.0, 0.0) == pytest.approx(0.6)
    assert fitness(0.8, 0.6, 0.25) == pytest.approx(0.48 + 0.12 + 0.05)
    assert fitness(0.9, 0.3, 0.0, "equal") == pytest.approx(0.4)
    with pytest.raises(ValueError):
        fitness(0, 0, 0, "lexicographic")


def test_config_validation():
    for bad in ({"population": 3}, {"games": 0}, {"generations": -1}, {"fitness_mode": "x"}):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
    d = TINY.to_dict()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(d))) == TINY


def test_offspring_counts():
    assert offspring_counts(20) == (14, 5)
    assert offspring_counts(10) == (7, 2)
    for p in range(2, 60, 2):
        c, k = offspring_counts(p)
        assert c + k + 1 == p


def test_rank_ties_keep_lowest_id():
    r = [EvalResult(0, 0, 0, f, 1, 1) for f in (0.5, 0.7, 0.7, 0.5)]
    assert _rank([9, 4, 2, 1], r) == [2, 1, 3, 0]


def test_openings_pairs_share_start():
    cfg = replace(TINY, games=5)
    o = openings(cfg)
    assert len(o) == 5
    assert o[0].fen() == o[1].fen() and o[2].fen() == o[3].fen()
    assert [p.fen() for p in openings(cfg)] == [p.fen() for p in o]
    assert all(p.fen().startswith("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w")
               for p in openings(replace(cfg, opening_plies=0)))


def test_neutral_params_in_mirror_agree_fully():
    cfg = replace(TINY, opponent="expressive", games=4, ply_cap=60)
    players = cfg.players()
    for g, start in enumerate(openings(cfg)):
        log, _ = play_game(players, g % 2 == 0, params_fn=lambda rng: neutral_params(),
                           ply_cap=cfg.ply_cap, start=start)
        assert log.brain_moves and all(bm.agree for bm in log.brain_moves)


def test_all_draw_w():
    cfg = replace(TINY, opponent="expressive", ply_cap=4)   # every game hits the ply cap
    res = evaluate_genome(random_brain(np.random.default_rng(0)), cfg)
    assert res.draws == cfg.games and res.W == 0.5


def test_evaluation_deterministic():
    g = random_brain(np.random.default_rng(5))
    assert evaluate_genome(g, TINY) == evaluate_genome(g, TINY)


def test_elite_carried_bit_identical():
    evo = Evolution(TINY)
    r0 = evo.step()
    elite = evo.population[0]
    assert elite.lineage_id == r0.best_id
    r1 = evo.step()
    assert r1.genome_ids[0] == r0.best_id
    assert r1.results[0] == r0.results[r0.elite_index]
    assert r1.best_fitness >= r0.best_fitness
    for rec in (r0, r1):
        assert rec.best_fitness >= rec.mean_fitness
        fs = sorted((r.F for r in rec.results), reverse=True)
        assert np.mean(fs[: len(fs) // 2]) >= rec.mean_fitness


def test_zero_generations(tmp_path):
    cfg = replace(TINY, generations=0)
    assert run_experiment(cfg, tmp_path, "z") == []
    header, rows = read_log(tmp_path / "z.csv")
    assert header["config"]["generations"] == 0 and rows == []
    assert (tmp_path / "z.population.json").exists()
    assert not (tmp_path / "z.best.json").exists()


def test_logs_reproducible(tmp_path):
    run_experiment(TINY, tmp_path / "a", "x")
    run_experiment(TINY, tmp_path / "b", "x")
    a = (tmp_path / "a" / "x.csv").read_text().splitlines()
    b = (tmp_path / "b" / "x.csv").read_text().splitlines()
    assert a[1:] == b[1:]
    assert a[1] == "gen,genome_idx,A,C,W,F,is_elite"
    assert len(a) == 2 + TINY.population * TINY.generations
    _, rows = read_log(tmp_path / "a" / "x.csv")
    for gen in range(TINY.generations):
        assert sum(r["is_elite"] for r in rows if r["gen"] == gen) == 1
    for r in rows:
        assert r["F"] == pytest.approx(fitness(r["A"], r["C"], r["W"]), abs=1e-9)
    cfg, pop = load_population(tmp_path / "a" / "x.population.json")
    assert cfg == TINY and len(pop) == TINY.population
