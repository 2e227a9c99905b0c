"""Move predictors ("cartridges").

A cartridge maps a position to per-move logits, a win/draw/loss estimate and
per-piece-type attention.  The brain only ever reshapes this output.  The
shipped predictors are deterministic 1-ply evaluators: each legal move is
scored by a profile-weighted sum of the successor position's sensors.  A
replay cartridge serves distributions recorded elsewhere from a TSV file.
"""

from __future__ import annotations

import math
import random
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .board import (PIECE_TYPES, Move, Position, _push, game_status, legal_moves)
from .features import N_SENSORS, extract_sensors, _material

# score bonus (in score units, before sharpness) for a mating move
MATE_SCORE = 10.0


class NoLegalMovesError(ValueError):
    pass


class ProfileCollisionError(ValueError):
    pass


class ReplayMissingError(KeyError):
    pass


@dataclass(frozen=True)
class Expansion:
    """Everything a 1-ply evaluator needs about a position's successors."""

    moves: tuple[Move, ...]
    succ_sensors: np.ndarray       # (n_moves, 20), side-to-move view of each successor
    mover_types: np.ndarray        # (n_moves,) index into PIECE_TYPES
    mates: np.ndarray              # (n_moves,) successor is checkmate
    captures: np.ndarray           # (n_moves,) move captures a piece


class _ExpansionCache:
    def __init__(self, maxsize: int = 200_000):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self.hits = self.misses = 0

    def get(self, pos: Position) -> Expansion:
        key = pos.key
        hit = self._data.get(key)
        if hit is not None:
            self.hits += 1
            self._data.move_to_end(key)
            return hit
        self.misses += 1
        exp = _expand(pos)
        self._data[key] = exp
        if len(self._data) > self.maxsize:
            self._data.popitem(last=False)
        return exp

    def clear(self):
        self._data.clear()
        self.hits = self.misses = 0


def _expand(pos: Position) -> Expansion:
    moves = tuple(legal_moves(pos))
    board = pos.raw
    sens = np.empty((len(moves), N_SENSORS))
    types = np.empty(len(moves), dtype=np.int64)
    mates = np.zeros(len(moves), dtype=bool)
    caps = np.zeros(len(moves), dtype=bool)
    for i, mv in enumerate(moves):
        cm = mv.to_chess()
        types[i] = board.piece_type_at(mv.from_square) - 1
        caps[i] = board.is_capture(cm)
        succ = _push(pos, cm)
        sens[i] = extract_sensors(succ)
        sb = succ.raw
        mates[i] = sb.is_check() and sb.is_checkmate()
    sens.setflags(write=False)
    return Expansion(moves, sens, types, mates, caps)


EXPANSIONS = _ExpansionCache()


def expand(pos: Position) -> Expansion:
    return EXPANSIONS.get(pos)


@dataclass(frozen=True)
class CartridgeProfile:
    identifier: str
    weights: tuple[float, ...]
    sharpness: float
    wdl_temperature: float

    def __post_init__(self):
        if len(self.weights) != N_SENSORS:
            raise ValueError(f"profile needs {N_SENSORS} weights")
        if self.sharpness <= 0 or self.wdl_temperature <= 0:
            raise ValueError("sharpness and wdl temperature must be positive")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights)


@dataclass(frozen=True)
class CartridgeOutput:
    moves: tuple[Move, ...]
    logits: np.ndarray
    probs: np.ndarray
    wdl: np.ndarray
    piece_attention: np.ndarray
    mover_types: np.ndarray = field(repr=False)

    @property
    def argmax(self) -> int:
        # np.argmax returns the first maximum, i.e. the canonical tie-break
        return int(np.argmax(self.probs))

    @property
    def best_move(self) -> Move:
        return self.moves[self.argmax]


class Cartridge(Protocol):
    name: str

    def evaluate(self, pos: Position) -> CartridgeOutput: ...


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def material_wdl(pos: Position, temperature: float) -> np.ndarray:
    """Logistic win/loss in the material difference plus a draw bump at equality."""
    b = pos.raw
    diff = _material(b, b.occupied_co[b.turn]) - _material(b, b.occupied_co[not b.turn])
    x = diff / temperature
    win, loss = _sigmoid(x), _sigmoid(-x)
    draw = math.exp(-x * x)
    total = win + draw + loss
    return np.array([win / total, draw / total, loss / total])


def piece_attention(probs: np.ndarray, mover_types: np.ndarray) -> np.ndarray:
    mass = np.bincount(mover_types, weights=probs, minlength=len(PIECE_TYPES))
    top = mass.max()
    return mass / top if top > 0 else mass


def move_scores(profile: CartridgeProfile, exp: Expansion) -> np.ndarray:
    """Profile score of each move, higher is better for the mover."""
    return -(exp.succ_sensors @ profile.weight_array) + MATE_SCORE * exp.mates


def evaluate(profile: CartridgeProfile, pos: Position) -> CartridgeOutput:
    exp = expand(pos)
    if not exp.moves:
        raise NoLegalMovesError(pos.fen())
    logits = profile.sharpness * move_scores(profile, exp)
    probs = softmax(logits)
    return CartridgeOutput(
        moves=exp.moves,
        logits=logits,
        probs=probs,
        wdl=material_wdl(pos, profile.wdl_temperature),
        piece_attention=piece_attention(probs, exp.mover_types),
        mover_types=exp.mover_types,
    )


def opponent_move(profile: CartridgeProfile | Cartridge, pos: Position) -> Move:
    out = _evaluate_any(profile, pos)
    return out.best_move


def _evaluate_any(predictor, pos: Position) -> CartridgeOutput:
    if isinstance(predictor, CartridgeProfile):
        return evaluate(predictor, pos)
    return predictor.evaluate(pos)


def overlap(a, b, positions: Sequence[Position]) -> float:
    """Share of positions on which two predictors pick the same argmax."""
    if not positions:
        raise ValueError("overlap needs at least one position")
    same = sum(_evaluate_any(a, p).best_move == _evaluate_any(b, p).best_move for p in positions)
    return same / len(positions)


class HeuristicCartridge:
    def __init__(self, profile: CartridgeProfile):
        self.profile = profile
        self.name = profile.identifier

    def evaluate(self, pos: Position) -> CartridgeOutput:
        return evaluate(self.profile, pos)


# -- shipped profiles -------------------------------------------------------
# weight order follows features.SENSOR_NAMES; material 78 = one pawn per unit

_EXPRESSIVE = (78.0, -1.5, 3.0, -1.0, -0.8, 2.5, 6.0, -4.0, 0.5, 0.4,
               1.0, 1.0, 1.2, -0.5, 0.6, 0.3, 0.0, 1.5, -3.0, 4.0)
_OPPONENT_A = (78.0, -3.0, 1.0, -2.0, -2.0, 0.5, 2.0, -6.0, 1.5, 0.8,
               0.2, 2.5, 2.5, -1.5, 1.0, 0.5, 0.0, 0.5, -1.0, 3.0)
_OPPONENT_B = (78.0, -0.5, 4.5, -0.3, -0.3, 4.0, 9.0, -1.0, 0.2, 0.1,
               2.0, 0.3, 0.2, 0.0, 0.2, 0.1, 0.0, 3.0, -4.5, 5.0)
# same evaluator as the expressive profile with the positional terms halved:
# the weaker member of a same-model pair
_EXPRESSIVE_LITE = (_EXPRESSIVE[0],) + tuple(0.5 * w for w in _EXPRESSIVE[1:])

PROFILES: dict[str, CartridgeProfile] = {}


def benchmark_positions(n: int = 100, seed: int = 20260101) -> list[Position]:
    return sample_positions(n, seed)


def check_distinct(a: CartridgeProfile, b: CartridgeProfile,
                   positions: Sequence[Position] | None = None) -> float:
    """Benchmark argmax agreement; raises when the two profiles never differ."""
    if a.weights == b.weights:
        return 1.0
    agreement = overlap(a, b, positions or _benchmark())
    if agreement >= 1.0:
        raise ProfileCollisionError(f"{a.identifier} and {b.identifier} pick identical moves")
    return agreement


_BENCH: list[Position] = []


def _benchmark() -> list[Position]:
    if not _BENCH:
        _BENCH.extend(benchmark_positions())
    return _BENCH


def register_profile(profile: CartridgeProfile, check: bool = True) -> CartridgeProfile:
    if check:
        for other in PROFILES.values():
            if other.identifier != profile.identifier:
                check_distinct(profile, other)
    PROFILES[profile.identifier] = profile
    return profile


def get_profile(name: str) -> CartridgeProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown cartridge profile {name!r}; have {sorted(PROFILES)}") from None


# the shipped set is verified distinct in the test suite; skip the
# benchmark sweep at import time
register_profile(CartridgeProfile("expressive", _EXPRESSIVE, sharpness=4.0, wdl_temperature=3.0), check=False)
register_profile(CartridgeProfile("opponent-A", _OPPONENT_A, sharpness=8.0, wdl_temperature=3.0), check=False)
register_profile(CartridgeProfile("opponent-B", _OPPONENT_B, sharpness=8.0, wdl_temperature=3.0), check=False)
register_profile(CartridgeProfile("expressive-lite", _EXPRESSIVE_LITE, sharpness=4.0, wdl_temperature=3.0),
                 check=False)


def sample_positions(n: int, seed: int, min_ply: int = 10, max_ply: int = 30) -> list[Position]:
    """Deterministic sample of non-terminal positions reached by random play."""
    rng = random.Random(seed)
    out: list[Position] = []
    while len(out) < n:
        pos = Position.start()
        target = rng.randint(min_ply, max_ply)
        history: list[Position] = []
        ok = True
        for _ in range(target):
            moves = legal_moves(pos)
            if not moves:
                ok = False
                break
            history.append(pos)
            pos = _push(pos, rng.choice(moves).to_chess())
        if ok and game_status(pos, history, ply=len(history), ply_cap=10**6) is None:
            out.append(pos)
    return out


# -- replay cartridge -------------------------------------------------------

def midgame_positions(n: int, seed: int, white: str = "opponent-A", black: str = "opponent-B",
                      min_ply: int = 12, max_ply: int = 80, per_game: int = 5) -> list[Position]:
    """Positions from games between two profiles after 4-8 random opening plies.

    The two profiles swap colours every game; up to ``per_game`` positions at
    ply >= ``min_ply`` are kept from each game.
    """
    rng = np.random.default_rng(seed)
    pair = (get_profile(white), get_profile(black))
    out: list[Position] = []
    game = 0
    while len(out) < n:
        sides = pair if game % 2 == 0 else pair[::-1]
        game += 1
        n_open = int(rng.integers(4, 9))
        pos = Position.start()
        history: list[Position] = []
        seen: list[Position] = []
        for ply in range(max_ply):
            if game_status(pos, history, ply=ply, ply_cap=max_ply) is not None:
                break
            if ply < n_open:
                moves = legal_moves(pos)
                mv = moves[int(rng.integers(len(moves)))]
            else:
                mv = evaluate(sides[ply % 2], pos).best_move
            if ply >= min_ply:
                seen.append(pos)
            history.append(pos)
            pos = _push(pos, mv.to_chess())
        if seen:
            keep = rng.choice(len(seen), size=min(per_game, len(seen)), replace=False)
            out.extend(seen[i] for i in sorted(keep))
    return out[:n]


def _fen_key(fen: str) -> str:
    return " ".join(fen.split()[:4])


class ReplayCartridge:
    """Serves per-position outputs from a tab-separated replay file.

    Record layout: FEN, then (uci move, logit) pairs, then 3 WDL values, then
    6 attention values.
    """

    def __init__(self, path: str | Path, name: str | None = None):
        self.path = Path(path)
        self.name = name or f"replay:{self.path.name}"
        self._records: dict[str, tuple[dict[str, float], np.ndarray, np.ndarray]] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                body = fields[1:]
                if len(body) < 9 or (len(body) - 9) % 2:
                    raise ValueError(f"{self.path}:{lineno}: malformed replay record")
                pairs = body[:-9]
                logits = {pairs[i]: float(pairs[i + 1]) for i in range(0, len(pairs), 2)}
                wdl = np.array([float(x) for x in body[-9:-6]])
                att = np.array([float(x) for x in body[-6:]])
                self._records[_fen_key(fields[0])] = (logits, wdl, att)

    def __len__(self):
        return len(self._records)

    def evaluate(self, pos: Position) -> CartridgeOutput:
        rec = self._records.get(_fen_key(pos.fen()))
        if rec is None:
            raise ReplayMissingError(f"position not in replay file: {pos.fen()}")
        logit_map, wdl, att = rec
        exp = expand(pos)
        if not exp.moves:
            raise NoLegalMovesError(pos.fen())
        try:
            logits = np.array([logit_map[m.uci()] for m in exp.moves])
        except KeyError as exc:
            raise ReplayMissingError(f"replay record lacks legal move {exc} for {pos.fen()}") from None
        if len(logit_map) != len(exp.moves):
            raise ValueError(f"replay record has moves that are not legal in {pos.fen()}")
        return CartridgeOutput(exp.moves, logits, softmax(logits), wdl.copy(), att.copy(), exp.mover_types)


def write_replay(path: str | Path, predictor, positions: Sequence[Position]) -> None:
    """Record a predictor's outputs for ``positions`` in replay format."""
    with open(path, "w", encoding="utf-8") as fh:
        for pos in positions:
            out = _evaluate_any(predictor, pos)
            fields = [pos.fen()]
            for mv, lg in zip(out.moves, out.logits):
                fields += [mv.uci(), repr(float(lg))]
            fields += [repr(float(x)) for x in out.wdl]
            fields += [repr(float(x)) for x in out.piece_attention]
            fh.write("\t".join(fields) + "\n")


def make_predictor(name: str) -> Cartridge:
    """Profile name, or ``replay:<path>`` for a replay file."""
    if name.startswith("replay:"):
        return ReplayCartridge(name.split(":", 1)[1])
    return HeuristicCartridge(get_profile(name))
