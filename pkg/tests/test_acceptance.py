"""Acceptance criteria, one test each, at the stated tolerances.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from evobrain import hebbian, harness
from evobrain.board import Position, apply_move, perft
from evobrain.brain import assemble_pool, initial_memory, run_brain
from evobrain.cartridge import make_predictor, overlap, softmax
from evobrain.chain import ChainParams, neutral_params, reshape, reshape_full
from evobrain.evolution import ExperimentConfig, evaluate_genome, fitness, openings, run_experiment
from evobrain.features import GameState, extract_context, extract_dist_shape, extract_sensors
from evobrain.games import play_game
from evobrain.neat import random_brain
from evobrain.stats import SeedSeries, fisher_exact, icc1, spearman, variance_crossover, welch_t

from test_board import PERFT_SUITE
from test_stats import fisher_oracle, icc_oracle, spearman_oracle

SEEDS = (0, 1, 2)


def desk(set_id: str, seed: int) -> ExperimentConfig:
    return ExperimentConfig.from_dict({**harness.DESK_DEFAULTS, **harness.SET_OVERRIDES[set_id], "seed": seed})


def detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion(1, "neutral chain is the identity on the predictor distribution")
def test_c01_chain_identity(record_property):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    params = neutral_params()
    for _ in range(10_000):
        n = int(rng.integers(1, 60))
        logits = rng.normal(scale=rng.uniform(0.1, 8), size=n)
        probs = softmax(logits)
        out = reshape(logits, probs, rng.integers(0, 6, size=n), params)
        worst = max(worst, float(np.max(np.abs(out - probs))))
        assert np.argmax(out) == np.argmax(probs)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"max |diff| {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed < 10


@pytest.mark.criterion(2, "gate zeroes every move at or below tau when exploration is off")
def test_c02_gate(record_property):
    rng = np.random.default_rng(102)
    fallbacks = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 50))
        logits = rng.normal(scale=rng.uniform(0.1, 5), size=n)
        probs = softmax(logits)
        u = rng.random(16)
        u[9] = 0.0   # exploration epsilon at the bottom of its range
        p = ChainParams.from_unit(u)
        p = replace(p, tau=float(rng.uniform(0, 0.3)))
        out = reshape(logits, probs, rng.integers(0, 6, size=n), p)
        gated = probs <= p.tau
        if gated.all():
            # nothing survives: the top move alone is kept so a move can still be played
            fallbacks += 1
            gated[int(np.argmax(probs))] = False
        assert np.all(out[gated] == 0.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
    detail(record_property, f"10000 cases, {fallbacks} all-gated fallbacks")


def _replay_params(genome, log, start, ply_cap, weights):
    """Chain parameters the brain would produce along a logged game with fixed weights."""
    cart = make_predictor("expressive")
    pos, prev, memory, out = start, None, initial_memory(), []
    for ply, mv in enumerate(log.moves):
        if pos.white_to_move == log.brain_white:
            c = cart.evaluate(pos)
            last_capture = prev is not None and prev[0].raw.is_capture(prev[1].to_chess())
            ctx = extract_context(pos, GameState(ply, ply_cap, last_capture), len(c.moves))
            pool = assemble_pool(extract_sensors(pos), ctx, c.wdl, extract_dist_shape(c.probs))
            bp = run_brain(genome, pool, memory, c.piece_attention, weights)
            memory = bp.memory
            out.append(bp.params)
        prev = (pos, mv)
        pos = apply_move(pos, mv)
    return out


@pytest.mark.criterion(3, "plastic weights stay within 0.3 of base; OFF equals reset-state replay")
def test_c03_hebbian_bounds(record_property):
    cfg = ExperimentConfig(seed=103, ply_cap=60, games=10)
    players = cfg.players()
    starts = openings(cfg)
    rng = np.random.default_rng(103)
    worst, games = 0.0, 0
    for b in range(100):
        g = random_brain(rng, lineage_id=b)
        state = hebbian.new_state(g)
        for k in range(10):
            state = hebbian.reset(state)
            log, state = play_game(players, k % 2 == 0, g, ply_cap=cfg.ply_cap, start=starts[k], plastic=state)
            worst = max(worst, log.max_drift)
            for m in state.values():
                assert np.all(np.abs(m.current - m.base) <= hebbian.DRIFT + 1e-12)
            games += 1
    assert worst <= hebbian.DRIFT + 1e-12

    replays = 0
    for b in range(5):
        g = random_brain(rng, lineage_id=b)
        drifted = hebbian.new_state(g)
        _, drifted = play_game(players, True, g, ply_cap=cfg.ply_cap, start=starts[0], plastic=drifted)
        reset_w = hebbian.weights(hebbian.reset(drifted))
        for k in range(2):
            off, _ = play_game(players, k % 2 == 0, g, ply_cap=cfg.ply_cap, start=starts[k])
            replay = _replay_params(g, off, starts[k], cfg.ply_cap, reset_w)
            assert replay == [bm.params for bm in off.brain_moves]
            replays += 1
    detail(record_property, f"{games} games, max drift {worst:.4f}; {replays} OFF games replayed bit-identically")


@pytest.mark.criterion(4, "fitness arithmetic in both modes")
def test_c04_fitness(record_property):
    assert fitness(1, 0, 0) == pytest.approx(0.6, abs=1e-15)
    assert fitness(0, 1, 0) == pytest.approx(0.2, abs=1e-15)
    assert fitness(0, 0, 1) == pytest.approx(0.2, abs=1e-15)
    assert fitness(1, 0, 0, "equal") == pytest.approx(1 / 3, abs=1e-15)
    assert fitness(1, 1, 1) == pytest.approx(1.0) and fitness(1, 1, 1, "equal") == pytest.approx(1.0)


def _final_agreements(set_id):
    out = {}
    for seed in SEEDS:
        recs = run_experiment(desk(set_id, seed))
        out[seed] = [r.best_agreement for r in recs]
    return out


@pytest.mark.criterion(5, "mirror matchup: best agreement >= 0.95 at generation 15 in 2 of 3 seeds")
def test_c05_transparency(record_property):
    traj = _final_agreements("set2-mirror")
    finals = {s: t[-1] for s, t in traj.items()}
    detail(record_property, "final A " + ", ".join(f"seed {s}: {a:.3f}" for s, a in finals.items()))
    assert all(len(t) == 15 for t in traj.values())
    assert sum(a >= 0.95 for a in finals.values()) >= 2


@pytest.mark.criterion(6, "heterogeneous matchup: null overlap < endpoint agreement < 0.95 in every seed")
def test_c06_heterogeneous(record_property, golden_overlap):
    pin = golden_overlap["midgame"]["overlap"]["opponent-A|opponent-B"]
    nulls = golden_overlap["null_brain"]
    traj = _final_agreements("set3-hetero")
    finals = {s: t[-1] for s, t in traj.items()}
    detail(record_property, f"pin {pin}; " + ", ".join(
        f"seed {s}: {a:.3f} (run null {nulls[f'set3-hetero|{s}']:.3f})" for s, a in finals.items()))
    assert all(pin < a < 0.95 for a in finals.values())


@pytest.mark.criterion(7, "null-brain agreement equals predictor overlap on the same positions")
def test_c07_null_equality(record_property, golden_overlap):
    vals = []
    for seed in SEEDS:
        cfg = desk("set3-hetero", seed)
        rep = harness.run_baselines(cfg, kinds=("null",))["null"]
        players = cfg.players()
        positions = []
        for g, start in enumerate(openings(cfg)):
            log, _ = play_game(players, g % 2 == 0, params_fn=lambda _r: neutral_params(),
                               ply_cap=cfg.ply_cap, start=start)
            positions.extend(Position.from_fen(bm.fen) for bm in log.brain_moves)
        ov = overlap(make_predictor(cfg.cartridge), make_predictor(cfg.reference_name), positions)
        assert rep["A"] == ov == rep["overlap_same_positions"]
        assert rep["A"] == golden_overlap["null_brain"][f"set3-hetero|{seed}"]
        vals.append(rep["A"])
    detail(record_property, "null A " + ", ".join(f"{v:.4f}" for v in vals))


@pytest.mark.criterion(8, "statistics match independent oracles")
def test_c08_stats_oracles(record_property):
    tables = 0
    for n in range(31):
        for a, b, c in itertools.product(range(n + 1), repeat=3):
            d = n - a - b - c
            if d < 0:
                continue
            want = float(fisher_oracle(((a, b), (c, d))))
            assert fisher_exact([[a, b], [c, d]]).p_value == pytest.approx(want, rel=1e-9, abs=1e-15)
            tables += 1
    rng = np.random.default_rng(108)
    for _ in range(1000):
        n, k = rng.integers(2, 8, size=2)
        m = rng.normal(size=(n, k)) + rng.normal(size=(n, 1))
        assert icc1(m) == pytest.approx(min(1.0, max(-1.0, icc_oracle(m.tolist()))), abs=1e-12)
    w = welch_t([1, 2, 3], [4, 5, 6])
    assert w.statistic == pytest.approx(-3.674, abs=1e-3)
    assert w.p_value == pytest.approx(0.0213, abs=1e-3)
    cases = 0
    for n in range(3, 8):
        for _ in range(10):
            x, y = rng.permutation(40)[:n], rng.permutation(40)[:n]
            rho, p = spearman_oracle(x.tolist(), y.tolist())
            r = spearman(x, y)
            assert r.statistic == pytest.approx(rho, abs=1e-12) and r.p_value == pytest.approx(p, abs=1e-12)
            cases += 1
    detail(record_property, f"{tables} Fisher tables, 1000 ICC matrices, {cases} Spearman cases")


@pytest.mark.criterion(9, "variance crossover fires at the constructed generation with rho = 1")
def test_c09_crossover(record_property):
    n_gen, start = 50, 20
    g = np.arange(n_gen, dtype=float)
    # three seeds at mean +-s have sample variance s^2
    var_on = np.where(g < start, 0.5, g - start + 2.0)
    on = [SeedSeries(k, 0.5 + d * np.sqrt(var_on), np.zeros(n_gen)) for k, d in enumerate((-1, 0, 1))]
    off = [SeedSeries(k, 0.5 + d * np.ones(n_gen), np.zeros(n_gen)) for k, d in enumerate((-1, 0, 1))]
    ratio, cross, _ = variance_crossover(on, off)
    rho = spearman(g[start:], np.array(ratio)[start:])
    detail(record_property, f"crossover {cross}, rho {rho.statistic}")
    assert cross == start
    assert rho.statistic == 1.0


@pytest.mark.criterion(10, "set-1 desk runs are byte-identical apart from the header")
def test_c10_determinism(record_property, tmp_path):
    texts = []
    for run in ("a", "b"):
        m = harness.RunManifest.from_dict({"name": "det", "sets": ["set1-on", "set1-off"], "seeds": [0],
                                           "output_dir": str(tmp_path / run)})
        harness.run_set(m)
        texts.append({p.name: p.read_text().splitlines()[1:] for p in (tmp_path / run).glob("set1-*_seed0.csv")})
    assert set(texts[0]) == {"set1-on_seed0.csv", "set1-off_seed0.csv"}
    assert texts[0] == texts[1]
    detail(record_property, ", ".join(f"{k}: {len(v) - 1} rows" for k, v in sorted(texts[0].items())))


@pytest.mark.criterion(11, "perft depths 1 to 4 on ten positions")
def test_c11_perft(record_property):
    nodes = 0
    for fen, counts in PERFT_SUITE:
        pos = Position.from_fen(fen)
        got = tuple(perft(pos, d) for d in range(1, 5))
        assert got == counts, fen
        nodes += sum(got)
    detail(record_property, f"{len(PERFT_SUITE)} positions, {nodes} nodes")


@pytest.mark.criterion(12, "imagination off: chosen move is the reshaped argmax")
def test_c12_imagination_off(record_property):
    cfg = ExperimentConfig(imagination=False, games=10, ply_cap=60, seed=112)
    cart = make_predictor(cfg.cartridge)
    rng = np.random.default_rng(112)
    games = moves = 0
    for b in range(10):
        _, logs = evaluate_genome(random_brain(rng, lineage_id=b), cfg, keep_logs=True)
        for log in logs:
            games += 1
            for bm in log.brain_moves:
                c = cart.evaluate(Position.from_fen(bm.fen))
                shaped = reshape_full(c.logits, c.probs, c.mover_types, bm.params).probs
                assert not bm.imagined
                assert bm.chosen == bm.reshaped_argmax == int(np.argmax(shaped))
                moves += 1
    assert games == 100
    detail(record_property, f"{games} games, {moves} brain moves")
