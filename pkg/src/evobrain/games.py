"""Playing games between a brain-driven cartridge and an opponent predictor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import hebbian
from .board import GameResult, Move, Position, _push, game_status
from .brain import assemble_pool, imagine, initial_memory, run_brain
from .cartridge import Cartridge, CartridgeOutput, expand
from .chain import ChainParams, TraceWriter, reshape_full
from .features import GameState, extract_context, extract_dist_shape, extract_sensors
from .neat import BrainGenome

ParamsFn = Callable[[np.random.Generator], ChainParams]


@dataclass(frozen=True)
class BrainMove:
    ply: int
    fen: str
    chosen: int
    reshaped_argmax: int
    cartridge_argmax: int
    reference_argmax: int
    conf: float
    imagined: bool
    params: ChainParams | None = field(default=None, repr=False)

    @property
    def agree(self) -> bool:
        return self.chosen == self.reference_argmax

    @property
    def agree_cartridge(self) -> bool:
        return self.chosen == self.cartridge_argmax


@dataclass
class GameLog:
    brain_white: bool
    moves: list[Move]
    result: GameResult
    brain_moves: list[BrainMove]
    max_drift: float = 0.0
    final_material: float = 0.5

    @property
    def score(self) -> float:
        return self.result.score_for(self.brain_white)

    @property
    def n_plies(self) -> int:
        return len(self.moves)


@dataclass
class Players:
    cartridge: Cartridge
    opponent: Cartridge
    reference: Cartridge


def _own_material(pos: Position, white: bool) -> float:
    s = extract_sensors(pos)[0]
    return s if pos.white_to_move == white else 1.0 - s


def play_game(
    players: Players,
    brain_white: bool,
    genome: BrainGenome | None = None,
    *,
    ply_cap: int = 200,
    imagination: bool = True,
    imagination_k: int = 3,
    plastic: hebbian.PlasticState | None = None,
    params_fn: ParamsFn | None = None,
    rng: np.random.Generator | None = None,
    start: Position | None = None,
    trace: TraceWriter | None = None,
    game_index: int = 0,
    learning_values: np.ndarray | None = None,
) -> tuple[GameLog, hebbian.PlasticState | None]:
    """Play one game and return its log plus the final plastic state.

    The brain side either runs ``genome`` (optionally with a plastic weight
    state that is updated after every brain move) or, when ``params_fn`` is
    given, draws chain parameters from it with imagination disabled.
    """
    if genome is None and params_fn is None:
        raise ValueError("need a genome or a params_fn")
    pos = start or Position.start()
    history: list[Position] = []
    moves: list[Move] = []
    records: list[BrainMove] = []
    memory = initial_memory()
    tracker = hebbian.RewardTracker(midpoint_ply=ply_cap // 2)
    last_capture = False
    last_material: float | None = None
    drift = 0.0

    while True:
        ply = len(history)
        status = game_status(pos, history, ply=ply, ply_cap=ply_cap)
        if status is not None:
            break
        if pos.white_to_move == brain_white:
            exp = expand(pos)
            cart: CartridgeOutput = players.cartridge.evaluate(pos)
            ref_idx = _index_of(cart, players.reference.evaluate(pos).best_move)
            conf = float(cart.probs.max())
            if params_fn is not None:
                params = params_fn(rng)
                bp = None
            else:
                sensors = extract_sensors(pos)
                ctx = extract_context(pos, GameState(ply, ply_cap, last_capture), len(cart.moves))
                pool = assemble_pool(sensors, ctx, cart.wdl, extract_dist_shape(cart.probs))
                weights = hebbian.weights(plastic) if plastic is not None else None
                bp = run_brain(genome, pool, memory, cart.piece_attention, weights)
                memory = bp.memory
                params = bp.params
            shaped = reshape_full(cart.logits, cart.probs, cart.mover_types, params)
            top = int(np.argmax(shaped.probs))
            use_imag = imagination and genome is not None and params_fn is None
            if use_imag:
                pw = plastic["perception"].current if plastic is not None else None
                chosen = imagine(genome, shaped.probs, exp.succ_sensors, imagination_k,
                                 candidates=shaped.alive, perception_weights=pw)
            else:
                chosen = top
            rec = BrainMove(ply, pos.fen(), chosen, top, cart.argmax, ref_idx, conf, use_imag, params)
            records.append(rec)
            if trace is not None:
                trace.write(game_index, ply, params, cart.moves, cart.probs, shaped.probs, cart.moves[chosen])

            if plastic is not None and bp is not None:
                material = _own_material(pos, brain_white)
                delta = 0.0 if last_material is None else material - last_material
                last_material = material
                rewards = tracker.rewards(hebbian.MoveRecord(
                    rec.agree, rec.agree_cartridge, conf, delta, bp.affect_mean, ply))
                acts = dict(bp.activations)
                if learning_values is not None:
                    acts["learning"] = learning_values
                plastic = hebbian.hebbian_update(plastic, genome, acts, rewards)
                drift = max(drift, hebbian.max_drift(plastic))
            mv = cart.moves[chosen]
            last_capture = bool(exp.captures[chosen])
        else:
            out = players.opponent.evaluate(pos)
            mv = out.best_move
            last_capture = pos.raw.is_capture(mv.to_chess())
        history.append(pos)
        moves.append(mv)
        pos = _push(pos, mv.to_chess())

    log = GameLog(brain_white, moves, status, records, drift, _own_material(pos, brain_white))
    return log, plastic


def _index_of(out: CartridgeOutput, mv: Move) -> int:
    return out.moves.index(mv)
