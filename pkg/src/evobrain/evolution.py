"""Generation loop: evaluation through games, fitness, selection, reproduction."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, hebbian
from .board import Position, apply_move, legal_moves
from .cartridge import make_predictor
from .games import GameLog, Players, play_game
from .neat import (BrainGenome, InnovationCounter, MutationConfig, crossover,
                   genome_to_dict, genome_from_dict, mutate_brain, random_brain)

FITNESS_MODES = ("multi", "equal")
POPULATION_FORMAT = "evobrain-population"
REPRODUCTION_STREAM = 1_000_000
INIT_STREAM = 2_000_000
OPENING_STREAM = 3_000_000
LOG_COLUMNS = ("gen", "genome_idx", "A", "C", "W", "F", "is_elite")


def fitness(A: float, C: float, W: float, mode: str = "multi") -> float:
    if mode == "multi":
        return 0.6 * A + 0.2 * C + 0.2 * W
    if mode == "equal":
        return (A + C + W) / 3.0
    raise ValueError(f"unknown fitness mode {mode!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    population: int = 20
    generations: int = 50
    games: int = 20
    fitness_mode: str = "multi"
    hebbian: bool = True
    imagination: bool = True
    cartridge: str = "expressive"
    opponent: str = "opponent-A"
    reference: str | None = None   # agreement target; defaults to the opponent
    seed: int = 0
    ply_cap: int = 200
    imagination_k: int = 3
    opening_plies: int = 4   # seeded random plies before each colour-swapped game pair
    mutation: MutationConfig = field(default_factory=MutationConfig)
    workers: int = 1

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and at least 2")
        if self.games < 1:
            raise ValueError("games must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.opening_plies < 0:
            raise ValueError("opening_plies must be >= 0")
        if self.fitness_mode not in FITNESS_MODES:
            raise ValueError(f"fitness mode must be one of {FITNESS_MODES}")

    @property
    def reference_name(self) -> str:
        return self.reference or self.opponent

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mutation"] = dataclasses.asdict(self.mutation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("mutation"), dict):
            d["mutation"] = MutationConfig(**d["mutation"])
        for key in ("hebbian", "imagination"):
            if isinstance(d.get(key), str):
                d[key] = d[key].lower() in ("on", "true", "1", "yes")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def players(self) -> Players:
        return Players(make_predictor(self.cartridge), make_predictor(self.opponent),
                       make_predictor(self.reference_name))


@dataclass(frozen=True)
class EvalResult:
    A: float
    C: float
    W: float
    F: float
    games: int
    moves: int
    wins: int = 0
    draws: int = 0
    losses: int = 0


def openings(cfg: ExperimentConfig) -> list[Position]:
    """Start position of every evaluation game.

    Games 2i and 2i+1 share an opening and swap colours.  Openings depend on
    the seed only, so every genome of a run faces the same set.
    """
    out = []
    for pair in range((cfg.games + 1) // 2):
        rng = np.random.default_rng([cfg.seed, OPENING_STREAM, pair])
        pos = Position.start()
        for _ in range(cfg.opening_plies):
            moves = legal_moves(pos)
            nxt = apply_move(pos, moves[int(rng.integers(len(moves)))])
            if not legal_moves(nxt) or nxt.raw.is_insufficient_material():
                break
            pos = nxt
        out.extend([pos, pos])
    return out[: cfg.games]


def eval_stream(seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, index])


def evaluate_genome(genome: BrainGenome, cfg: ExperimentConfig, rng: np.random.Generator | None = None,
                    players: Players | None = None, keep_logs: bool = False,
                    hebbian_on: bool | None = None):
    """Play ``cfg.games`` games and score the genome.

    Games are deterministic given the genome; ``rng`` is accepted for the
    stream contract and handed to the game loop.  Returns ``EvalResult`` or
    ``(EvalResult, logs)`` when ``keep_logs``.
    """
    players = players or cfg.players()
    starts = openings(cfg)
    plastic_on = cfg.hebbian if hebbian_on is None else hebbian_on
    state = hebbian.new_state(genome) if plastic_on else None
    learning_values = None
    logs: list[GameLog] = []
    agree = calib = 0.0
    n_moves = 0
    wins = draws = losses = 0
    for g in range(cfg.games):
        if state is not None:
            state = hebbian.reset(state)
        log, state = play_game(players, brain_white=(g % 2 == 0), genome=genome, ply_cap=cfg.ply_cap,
                               start=starts[g],
                               imagination=cfg.imagination, imagination_k=cfg.imagination_k,
                               plastic=state, rng=rng, game_index=g, learning_values=learning_values)
        for bm in log.brain_moves:
            agree += bm.agree
            calib += hebbian.calibration(bm.conf, bm.agree_cartridge)
        n_moves += len(log.brain_moves)
        s = log.score
        wins += s == 1.0
        draws += s == 0.5
        losses += s == 0.0
        if state is not None:
            mean_agree = np.mean([bm.agree for bm in log.brain_moves]) if log.brain_moves else 0.0
            mean_conf = np.mean([bm.conf for bm in log.brain_moves]) if log.brain_moves else 0.0
            summary = hebbian.learning_inputs(s, log.final_material, float(mean_agree), float(mean_conf))
            mult, learning_values = hebbian.learning_module_pass(genome, summary, state["learning"].current)
            state = hebbian.set_multipliers(state, mult)
        if keep_logs:
            logs.append(log)
    A = agree / n_moves if n_moves else 0.0
    C = calib / n_moves if n_moves else 0.0
    W = (wins + 0.5 * draws) / cfg.games
    res = EvalResult(A, C, W, fitness(A, C, W, cfg.fitness_mode), cfg.games, n_moves, wins, draws, losses)
    return (res, logs) if keep_logs else res


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    genome_ids: tuple[int, ...]
    results: tuple[EvalResult, ...]
    elite_index: int
    stream_ids: tuple[tuple[int, int, int], ...]

    @property
    def best_fitness(self) -> float:
        return self.results[self.elite_index].F

    @property
    def mean_fitness(self) -> float:
        return float(np.mean([r.F for r in self.results]))

    @property
    def best_id(self) -> int:
        return self.genome_ids[self.elite_index]

    @property
    def best_agreement(self) -> float:
        return self.results[self.elite_index].A

    @property
    def agreements(self) -> list[float]:
        return [r.A for r in self.results]


def _rank(ids: Sequence[int], results: Sequence[EvalResult]) -> list[int]:
    return sorted(range(len(ids)), key=lambda i: (-results[i].F, ids[i]))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def offspring_counts(population: int) -> tuple[int, int]:
    """(crossover, clone) counts for the non-elite slots."""
    n = population - 1
    n_cross = _round_half_up(0.75 * n)
    return n_cross, n - n_cross


class Evolution:
    """Population state for one run; ``step`` advances a generation."""

    def __init__(self, cfg: ExperimentConfig, population: list[BrainGenome] | None = None):
        self.cfg = cfg
        self.counter = InnovationCounter()
        self.generation = 0
        self.carried: dict[int, EvalResult] = {}
        if population is None:
            rng = np.random.default_rng([cfg.seed, 0, INIT_STREAM])
            population = [random_brain(rng, lineage_id=i) for i in range(cfg.population)]
        if len(population) != cfg.population:
            raise ValueError("population size mismatch")
        self.population = population
        self.next_id = max(g.lineage_id for g in population) + 1
        self._players: Players | None = None

    @property
    def players(self) -> Players:
        if self._players is None:
            self._players = self.cfg.players()
        return self._players

    def _evaluate_all(self) -> tuple[list[EvalResult], list[tuple[int, int, int]]]:
        cfg, gen = self.cfg, self.generation
        streams = [(cfg.seed, gen, i) for i in range(len(self.population))]
        todo = [i for i, g in enumerate(self.population) if g.lineage_id not in self.carried]
        results: dict[int, EvalResult] = {}
        if cfg.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futs = {i: pool.submit(_evaluate_job, self.population[i], cfg, streams[i]) for i in todo}
                for i, fut in futs.items():
                    results[i] = fut.result()
        else:
            for i in todo:
                results[i] = evaluate_genome(self.population[i], cfg, eval_stream(*streams[i]),
                                             players=self.players)
        out = [results[i] if i in results else self.carried[g.lineage_id]
               for i, g in enumerate(self.population)]
        return out, streams

    def step(self) -> GenerationRecord:
        cfg = self.cfg
        results, streams = self._evaluate_all()
        ids = [g.lineage_id for g in self.population]
        order = _rank(ids, results)
        record = GenerationRecord(self.generation, tuple(ids), tuple(results), order[0], tuple(streams))

        survivors = order[: cfg.population // 2]
        rng = np.random.default_rng([cfg.seed, self.generation, REPRODUCTION_STREAM])
        elite = self.population[order[0]]
        new_pop = [elite]
        n_cross, n_clone = offspring_counts(cfg.population)
        for _ in range(n_cross):
            i, j = (survivors[k] for k in rng.choice(len(survivors), size=2, replace=False))
            child = crossover(self.population[i], self.population[j], results[i].F, results[j].F, rng)
            child = mutate_brain(child, cfg.mutation, self.counter, rng)
            new_pop.append(child.with_id(self._new_id(), (ids[i], ids[j])))
        for _ in range(n_clone):
            i = survivors[int(rng.integers(len(survivors)))]
            child = mutate_brain(self.population[i], cfg.mutation, self.counter, rng)
            new_pop.append(child.with_id(self._new_id(), (ids[i],)))

        self.carried = {elite.lineage_id: results[order[0]]}
        self.population = new_pop
        self.generation += 1
        return record

    def _new_id(self) -> int:
        nid = self.next_id
        self.next_id += 1
        return nid

    def checkpoint(self) -> dict:
        return {
            "format": POPULATION_FORMAT,
            "version": 1,
            "generation": self.generation,
            "innovation_counter": self.counter.value,
            "config": self.cfg.to_dict(),
            "genomes": [genome_to_dict(g) for g in self.population],
            "carried": {str(k): dataclasses.asdict(v) for k, v in self.carried.items()},
        }


def _evaluate_job(genome: BrainGenome, cfg: ExperimentConfig, stream: tuple[int, int, int]) -> EvalResult:
    return evaluate_genome(genome, cfg, eval_stream(*stream))


def step_generation(evo: Evolution) -> tuple[list[BrainGenome], GenerationRecord]:
    record = evo.step()
    return evo.population, record


def log_rows(record: GenerationRecord):
    for idx, r in enumerate(record.results):
        yield (record.generation, idx, f"{r.A:.10f}", f"{r.C:.10f}", f"{r.W:.10f}", f"{r.F:.10f}",
               int(idx == record.elite_index))


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, name: str = "experiment",
                   progress=None) -> list[GenerationRecord]:
    """Run ``cfg.generations`` steps, streaming the generation log to ``out_dir``.

    Writes ``<name>.csv`` (first line is a ``#`` header with the config and a
    timestamp), ``<name>.population.json`` and ``<name>.best.json``.
    """
    evo = Evolution(cfg)
    records: list[GenerationRecord] = []
    writer = fh = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / f"{name}.csv", "w", newline="", encoding="utf-8")
        header = {"experiment": name, "version": __version__, "config": cfg.to_dict(),
                  "started": time.strftime("%Y-%m-%dT%H:%M:%S")}
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        fh.flush()
    try:
        for _ in range(cfg.generations):
            rec = evo.step()
            records.append(rec)
            if writer is not None:
                writer.writerows(log_rows(rec))
                fh.flush()
            if progress is not None:
                progress(rec)
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        out = Path(out_dir)
        (out / f"{name}.population.json").write_text(json.dumps(evo.checkpoint(), indent=1))
        if records:
            last = records[-1]
            best = next(g for g in evo.population if g.lineage_id == last.best_id)
            best_doc = genome_to_dict(best)
            best_doc["experiment"] = {"name": name, "generation": last.generation,
                                      "config": cfg.to_dict(), "fitness": dataclasses.asdict(last.results[last.elite_index])}
            (out / f"{name}.best.json").write_text(json.dumps(best_doc, indent=1))
    return records


def load_population(path: str | Path) -> tuple[ExperimentConfig, list[BrainGenome]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != POPULATION_FORMAT:
        raise ValueError(f"{path} is not a population checkpoint")
    return ExperimentConfig.from_dict(doc["config"]), [genome_from_dict(g) for g in doc["genomes"]]


def read_log(path: str | Path) -> tuple[dict, list[dict]]:
    """Header JSON and typed rows of a generation log CSV."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        header = json.loads(first[2:]) if first.startswith("# ") else {}
        rows = []
        for row in csv.DictReader(fh):
            rows.append({
                "gen": int(row["gen"]), "genome_idx": int(row["genome_idx"]),
                "A": float(row["A"]), "C": float(row["C"]),
                "W": float(row["W"]), "F": float(row["F"]), "is_elite": row["is_elite"] == "1",
            })
    return header, rows
