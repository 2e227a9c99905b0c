"""Experiment orchestration: run manifests, baselines, ablations and probes."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import stats
from .board import PIECE_NAMES, Position, mover_piece_type
from .brain import assemble_pool, initial_memory, run_brain
from .cartridge import overlap
from .chain import ChainParams, neutral_params, reshape_full
from .evolution import ExperimentConfig, evaluate_genome, eval_stream, openings, run_experiment
from .features import GameState, extract_context, extract_dist_shape, extract_sensors
from .games import Players, play_game
from .neat import BrainGenome, genome_from_dict

log = logging.getLogger(__name__)

OUTPUT_ENV = "EVOBRAIN_OUTPUT"
BASELINE_STREAM = 4_000_000
DELTA_T_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)

# laptop-sized defaults; every field can be overridden from the manifest
DESK_DEFAULTS = {"population": 10, "generations": 15, "games": 10, "ply_cap": 120}

_SET1 = {"cartridge": "expressive", "opponent": "opponent-A"}
SET_OVERRIDES: dict[str, dict] = {
    "set1-on": {**_SET1, "hebbian": True},
    "set1-off": {**_SET1, "hebbian": False},
    "set2-mirror": {"cartridge": "expressive", "opponent": "expressive"},
    "set2-dominant": {"cartridge": "expressive", "opponent": "expressive-lite"},
    "set3-hetero": {"cartridge": "opponent-A", "opponent": "opponent-B"},
    "set4-equal": {**_SET1, "fitness_mode": "equal"},
    "set5-noimag": {**_SET1, "imagination": False},
    "baseline-null": dict(_SET1),
    "baseline-random": dict(_SET1),
    "baseline-temperature": dict(_SET1),
    "ablation-hebbian": dict(_SET1),
}
EVOLUTION_SETS = ("set1-on", "set1-off", "set2-mirror", "set2-dominant", "set3-hetero",
                  "set4-equal", "set5-noimag")
BASELINE_SETS = ("baseline-null", "baseline-random", "baseline-temperature")


class ManifestError(ValueError):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


@dataclass(frozen=True)
class RunManifest:
    """One JSON document describing what to run.

    ``sets`` lists set ids; ``overrides`` apply to every set on top of the
    desk defaults and the set's own settings.
    """

    name: str
    sets: tuple[str, ...]
    seeds: tuple[int, ...] = (0,)
    overrides: dict = field(default_factory=dict)
    output_dir: str | None = None
    checkpoint: str | None = None
    opponents: tuple[str, ...] = ("opponent-A", "opponent-B")

    def __post_init__(self):
        if not self.sets:
            raise ManifestError("manifest lists no sets")
        unknown = [s for s in self.sets if s not in SET_OVERRIDES]
        if unknown:
            raise ManifestError(f"unknown set ids {unknown}; known: {sorted(SET_OVERRIDES)}")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ManifestError("seeds must be non-empty and distinct")
        if "ablation-hebbian" in self.sets and not self.checkpoint:
            raise ManifestError("ablation-hebbian needs a checkpoint")

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        d = dict(d)
        if "set" in d:
            s = d.pop("set")
            d["sets"] = [s] if isinstance(s, str) else s
        for key in ("sets", "seeds", "opponents"):
            if key in d:
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        if set(d) - known:
            raise ManifestError(f"unknown manifest keys {sorted(set(d) - known)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("sets", "seeds", "opponents"):
            d[key] = list(d[key])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def directory(self) -> Path:
        return Path(self.output_dir) if self.output_dir else output_root() / self.name

    def config_for(self, set_id: str, seed: int) -> ExperimentConfig:
        d = {**DESK_DEFAULTS, **SET_OVERRIDES[set_id], **self.overrides, "seed": seed}
        return ExperimentConfig.from_dict(d)


def log_name(set_id: str, seed: int) -> str:
    return f"{set_id}_seed{seed}"


def run_set(manifest: RunManifest, progress=None) -> int:
    """Run every (set, seed) pair of the manifest and write the set report.

    Returns 0 on success.  Config and I/O failures propagate as exceptions;
    the CLI turns them into a nonzero exit status.
    """
    out = manifest.directory()
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True) + "\n")
    (out / "config_hash.txt").write_text(manifest.config_hash() + "\n")

    report: dict = {"name": manifest.name, "config_hash": manifest.config_hash(), "sets": {}}
    series: dict[str, list[stats.SeedSeries]] = {}
    for set_id in manifest.sets:
        if set_id in EVOLUTION_SETS:
            series[set_id] = []
            for seed in manifest.seeds:
                cfg = manifest.config_for(set_id, seed)
                name = log_name(set_id, seed)
                log.info("running %s", name)
                run_experiment(cfg, out, name, progress=progress)
                series[set_id].append(stats.series_from_log(out / f"{name}.csv", seed))
        elif set_id in BASELINE_SETS:
            cells = [run_baselines(manifest.config_for(set_id, seed), kinds=(set_id.split("-", 1)[1],))
                     for seed in manifest.seeds]
            report["sets"][set_id] = {"per_seed": cells}
        elif set_id == "ablation-hebbian":
            genome = load_checkpoint(manifest.checkpoint)
            report["sets"][set_id] = {"per_seed": [
                run_hebbian_ablation(genome, manifest.opponents, manifest.config_for(set_id, seed))
                for seed in manifest.seeds]}

    report["sets"].update(set_reports(series, out))
    stats.write_report(out / "report.json", report)
    return 0


def set_reports(series: dict[str, list[stats.SeedSeries]], out: Path | None = None) -> dict:
    """Set-level summaries for whatever evolution sets are present."""
    rep: dict = {}
    for set_id, ss in series.items():
        entry: dict = {"trajectories": [stats.trajectory_summary(s) for s in ss], **stats.endpoint_summary(ss)}
        if set_id.startswith("set2"):
            entry["first_generation_at_0.95"] = [stats.first_reaching(s.agreement, 0.95) for s in ss]
        rep[set_id] = entry
    if len(series.get("set1-on", [])) >= 2 and len(series.get("set1-off", [])) >= 2:
        cross, rows = stats.crossover_report(series["set1-on"], series["set1-off"])
        rep["set1"] = cross
        if out is not None:
            stats.write_plot_csv(out / "set1_variance.csv", rows)
    if "set5-noimag" in series and "set1-on" in series:
        with_imag = stats.endpoint_summary(series["set1-on"])["mean"]
        without = stats.endpoint_summary(series["set5-noimag"])["mean"]
        rep["set5"] = {"agreement_with_imagination": with_imag, "agreement_without": without,
                       "delta": with_imag - without}
    return rep


# -- baselines ----------------------------------------------------------------

def _play_fixed(players: Players, cfg: ExperimentConfig, params_fn, rng) -> dict:
    """Brain-free games where the chain parameters come from ``params_fn``."""
    agree = n = 0
    score = 0.0
    positions: list[Position] = []
    for g, start in enumerate(openings(cfg)):
        glog, _ = play_game(players, brain_white=(g % 2 == 0), params_fn=params_fn, rng=rng,
                            ply_cap=cfg.ply_cap, start=start)
        agree += sum(bm.agree for bm in glog.brain_moves)
        n += len(glog.brain_moves)
        score += glog.score
        positions.extend(Position.from_fen(bm.fen) for bm in glog.brain_moves)
    return {"A": agree / n if n else 0.0, "W": score / cfg.games, "moves": n, "positions": positions}


def run_baselines(cfg: ExperimentConfig, kinds: Sequence[str] = ("null", "random", "temperature")) -> dict:
    """Null, random-parameter and temperature-only chains on ``cfg.games`` games."""
    players = cfg.players()
    out: dict = {"seed": cfg.seed, "cartridge": cfg.cartridge, "opponent": cfg.opponent}
    if "null" in kinds:
        r = _play_fixed(players, cfg, lambda _rng: neutral_params(), None)
        out["null"] = {"A": r["A"], "W": r["W"], "moves": r["moves"],
                       "overlap_same_positions": overlap(players.cartridge, players.reference, r["positions"])}
    if "random" in kinds:
        rng = np.random.default_rng([cfg.seed, BASELINE_STREAM])
        r = _play_fixed(players, cfg, lambda g: ChainParams.from_unit(g.random(16)), rng)
        out["random"] = {"A": r["A"], "W": r["W"], "moves": r["moves"]}
    if "temperature" in kinds:
        rows = []
        for dt in DELTA_T_GRID:
            p = ChainParams(delta_t=dt)
            r = _play_fixed(players, cfg, lambda _rng, p=p: p, None)
            rows.append({"delta_t": dt, "A": r["A"], "W": r["W"], "moves": r["moves"]})
        out["temperature"] = rows
    return out


def null_overlap(cfg: ExperimentConfig) -> float:
    """Null-brain agreement on the run's evaluation games."""
    return run_baselines(cfg, kinds=("null",))["null"]["A"]


# -- checkpoints, ablation, probes -------------------------------------------

def load_checkpoint(path: str | Path) -> BrainGenome:
    """Genome file, or the elite (first genome) of a population checkpoint."""
    doc = json.loads(Path(path).read_text())
    if "genomes" in doc:
        doc = doc["genomes"][0]
    return genome_from_dict(doc)


def run_hebbian_ablation(genome: BrainGenome, opponents: Sequence[str], cfg: ExperimentConfig) -> dict:
    """Win rate and agreement with plasticity off and on, per opponent."""
    cells = []
    for opp in opponents:
        c = dataclasses.replace(cfg, opponent=opp, reference=None)
        for heb in (False, True):
            res, logs = evaluate_genome(genome, c, eval_stream(cfg.seed, 0, 0), keep_logs=True, hebbian_on=heb)
            cells.append({"opponent": opp, "hebbian": "on" if heb else "off", "A": res.A, "W": res.W,
                          "wins": res.wins, "draws": res.draws, "losses": res.losses,
                          "games": [" ".join(m.uci() for m in lg.moves) for lg in logs]})
    return {"seed": cfg.seed, "cartridge": cfg.cartridge, "cells": cells}


def brain_choice(genome: BrainGenome, players: Players, pos: Position, ply: int = 20, ply_cap: int = 200) -> str:
    """Move the brain picks in a standalone position (fresh memory, no plasticity)."""
    from .brain import imagine
    from .cartridge import expand

    cart = players.cartridge.evaluate(pos)
    ctx = extract_context(pos, GameState(ply, ply_cap, False), len(cart.moves))
    pool = assemble_pool(extract_sensors(pos), ctx, cart.wdl, extract_dist_shape(cart.probs))
    bp = run_brain(genome, pool, initial_memory(), cart.piece_attention)
    shaped = reshape_full(cart.logits, cart.probs, cart.mover_types, bp.params)
    idx = imagine(genome, shaped.probs, expand(pos).succ_sensors, 3, candidates=shaped.alive)
    return cart.moves[idx].uci()


def probe(genomes: Sequence[BrainGenome], fens: Sequence[str], cfg: ExperimentConfig) -> dict:
    """Behavioural fingerprint per genome: position choices, openings, piece usage, game lengths."""
    players = cfg.players()
    positions = [Position.from_fen(f) for f in fens]
    out = []
    for g in genomes:
        _, logs = evaluate_genome(g, cfg, eval_stream(cfg.seed, 0, 0), players=players, keep_logs=True)
        usage: Counter = Counter()
        openers = []
        lengths = []
        for lg in logs:
            lengths.append(lg.n_plies)
            for bm in lg.brain_moves:
                pos = Position.from_fen(bm.fen)
                usage[PIECE_NAMES[mover_piece_type(pos, lg.moves[bm.ply]) - 1]] += 1
            if lg.brain_white and lg.brain_moves:
                openers.append(lg.moves[lg.brain_moves[0].ply].uci())
        out.append({
            "lineage_id": g.lineage_id,
            "choices": [brain_choice(g, players, p) for p in positions],
            "openings": openers,
            "piece_usage": {name: usage.get(name, 0) for name in PIECE_NAMES},
            "game_lengths": lengths,
        })
    disagreements = []
    for i, fen in enumerate(fens):
        picks = {o["lineage_id"]: o["choices"][i] for o in out}
        if len(set(picks.values())) > 1:
            disagreements.append({"fen": fen, "choices": picks})
    return {"genomes": out, "disagreements": disagreements}


def stats_from_logs(directory: str | Path) -> dict:
    """Rebuild set reports from a directory of generation logs."""
    d = Path(directory)
    series: dict[str, list[stats.SeedSeries]] = {}
    for p in sorted(d.glob("*_seed*.csv")):
        set_id, _, seed = p.stem.rpartition("_seed")
        series.setdefault(set_id, []).append(stats.series_from_log(p, int(seed)))
    if not series:
        raise FileNotFoundError(f"no generation logs in {d}")
    return set_reports(series, d)



def demo_checkpoint_path() -> Path:
    """Genome evolved with plasticity on, shipped for ablation demos."""
    return Path(__file__).parent / "data" / "demo_checkpoint.json"
