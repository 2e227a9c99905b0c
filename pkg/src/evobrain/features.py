"""Board sensors, game context and distribution-shape features.

Every feature is a float in [0, 1].  Sensors are computed from the point of
view of the side to move so that a brain never needs to know its colour.

Sensor layout (index: name)::

     0 material_balance        own minus opponent material, 0.5 = equal
     1 king_exposure           opponent-attacked share of own king zone
     2 passed_pawns            own passed pawns / 8
     3 isolated_pawns          own isolated pawns / 8
     4 doubled_pawns           own pawns sharing a file / 8
     5 center_control          own attacks on d4 e4 d5 e5 / 8
     6 mobility_own            own piece attack squares / 80
     7 mobility_opp            opponent piece attack squares / 80
     8 rook_activity           own rook mobility / (14 * rooks)
     9 bishop_pair             1 if own side has two or more bishops
    10 knight_outposts         own supported knights safe from pawns / 2
    11 coordination            share of own non-king pieces defended
    12 king_shield_own         own pawns in front of own king / 3
    13 king_shield_opp         opponent pawns in front of its king / 3
    14 rooks_open_files        own rooks on files without pawns / 2
    15 rooks_semi_open_files   own rooks on files without own pawns / 2
    16 game_phase              non-pawn material / 24 (1 = full board)
    17 king_exposure_opp       own-attacked share of opponent king zone
    18 passed_pawns_opp        opponent passed pawns / 8
    19 threats                 value of the best opponent piece that is attacked and
                               undefended, or attacked by a pawn, / 9
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import chess
import numpy as np

from .board import Position

N_SENSORS = 20
N_CONTEXT = 8
N_DIST_SHAPE = 4
MAX_LEGAL = 60
MAX_MATERIAL = 39

SENSOR_NAMES = (
    "material_balance", "king_exposure", "passed_pawns", "isolated_pawns",
    "doubled_pawns", "center_control", "mobility_own", "mobility_opp",
    "rook_activity", "bishop_pair", "knight_outposts", "coordination",
    "king_shield_own", "king_shield_opp", "rooks_open_files",
    "rooks_semi_open_files", "game_phase", "king_exposure_opp",
    "passed_pawns_opp", "threats",
)
CONTEXT_NAMES = (
    "ply", "game_phase", "white_to_move", "in_check", "material_balance",
    "last_move_capture", "halfmove_clock", "legal_move_count",
)
DIST_SHAPE_NAMES = ("entropy", "top1", "top1_gap", "legal_move_count")

_FULL = chess.BB_ALL
_NOT_A = _FULL & ~chess.BB_FILE_A
_NOT_H = _FULL & ~chess.BB_FILE_H
_CENTER = chess.BB_D4 | chess.BB_E4 | chess.BB_D5 | chess.BB_E5
_ADJ_FILES = [
    (chess.BB_FILES[f - 1] if f > 0 else 0) | (chess.BB_FILES[f + 1] if f < 7 else 0)
    for f in range(8)
]


def _ranks_ahead(color: bool, rank: int) -> int:
    bb = 0
    rng = range(rank + 1, 8) if color == chess.WHITE else range(0, rank)
    for r in rng:
        bb |= chess.BB_RANKS[r]
    return bb


# squares in front of a pawn on its own and adjacent files, per colour
_PASSED_SPAN = [[0] * 64, [0] * 64]
_ADJ_AHEAD = [[0] * 64, [0] * 64]
for _color in (chess.WHITE, chess.BLACK):
    for _sq in range(64):
        _f, _r = chess.square_file(_sq), chess.square_rank(_sq)
        _ahead = _ranks_ahead(_color, _r)
        _ADJ_AHEAD[_color][_sq] = _ADJ_FILES[_f] & _ahead
        _PASSED_SPAN[_color][_sq] = (_ADJ_FILES[_f] | chess.BB_FILES[_f]) & _ahead


def _pawn_attacks(pawns: int, color: bool) -> int:
    if color == chess.WHITE:
        return (((pawns << 7) & _NOT_H) | ((pawns << 9) & _NOT_A)) & _FULL
    return ((pawns >> 9) & _NOT_H) | ((pawns >> 7) & _NOT_A)


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _material(b: chess.Board, c: int) -> int:
    pop = chess.popcount
    return (pop(b.pawns & c) + 3 * pop(b.knights & c) + 3 * pop(b.bishops & c)
            + 5 * pop(b.rooks & c) + 9 * pop(b.queens & c))


def _passed(b: chess.Board, color: bool) -> int:
    own = b.pawns & b.occupied_co[color]
    enemy = b.pawns & b.occupied_co[not color]
    span = _PASSED_SPAN[color]
    return sum(1 for sq in chess.scan_forward(own) if not span[sq] & enemy)


def _king_zone(b: chess.Board, color: bool) -> int:
    k = b.king(color)
    return chess.BB_KING_ATTACKS[k] | chess.BB_SQUARES[k]


def _shield(b: chess.Board, color: bool) -> int:
    k = b.king(color)
    f, r = chess.square_file(k), chess.square_rank(k)
    files = chess.BB_FILES[f] | _ADJ_FILES[f]
    step = 1 if color == chess.WHITE else -1
    ranks = 0
    for d in (1, 2):
        rr = r + step * d
        if 0 <= rr < 8:
            ranks |= chess.BB_RANKS[rr]
    return chess.popcount(b.pawns & b.occupied_co[color] & files & ranks)


def _side_attacks(b: chess.Board, color: bool):
    """(union of attacks, non-pawn mobility, center hits, rook mobility)."""
    own = b.occupied_co[color]
    pawns = b.pawns & own
    pawn_att = _pawn_attacks(pawns, color)
    union = pawn_att | chess.BB_KING_ATTACKS[b.king(color)]
    center = chess.popcount(pawn_att & _CENTER)
    mobility = 0
    rook_mob = 0
    for sq in chess.scan_forward(own & ~b.pawns & ~b.kings):
        att = b.attacks_mask(sq)
        union |= att
        free = chess.popcount(att & ~own)
        mobility += free
        center += chess.popcount(att & _CENTER)
        if b.rooks & chess.BB_SQUARES[sq]:
            rook_mob += free
    return union, mobility, center, rook_mob


_VALUE = {chess.PAWN: 1, chess.KNIGHT: 3, chess.BISHOP: 3, chess.ROOK: 5, chess.QUEEN: 9}


def _best_threat(b: chess.Board, targets: int, att_us: int, att_them: int, pawn_att: int) -> int:
    best = 0
    for sq in chess.scan_forward(targets & att_us):
        value = _VALUE[b.piece_type_at(sq)]
        if value > best and (not att_them & chess.BB_SQUARES[sq]
                             or (value > 1 and pawn_att & chess.BB_SQUARES[sq])):
            best = value
    return best


def extract_sensors(pos: Position) -> np.ndarray:
    b = pos.raw
    us = b.turn
    them = not us
    own = b.occupied_co[us]
    opp = b.occupied_co[them]
    pop = chess.popcount

    att_us, mob_us, center_us, rook_mob = _side_attacks(b, us)
    att_them, mob_them, _, _ = _side_attacks(b, them)

    mat = 0.5 + (_material(b, own) - _material(b, opp)) / (2.0 * MAX_MATERIAL)

    zone_us = _king_zone(b, us)
    zone_them = _king_zone(b, them)
    exposure_us = pop(zone_us & att_them) / pop(zone_us)
    exposure_them = pop(zone_them & att_us) / pop(zone_them)

    own_pawns = b.pawns & own
    file_counts = [pop(own_pawns & chess.BB_FILES[f]) for f in range(8)]
    isolated = sum(file_counts[f] for f in range(8)
                   if file_counts[f] and not own_pawns & _ADJ_FILES[f])
    doubled = sum(c for c in file_counts if c > 1)

    rooks = b.rooks & own
    n_rooks = pop(rooks)
    rook_activity = rook_mob / (14.0 * n_rooks) if n_rooks else 0.0
    open_files = semi_open = 0
    for sq in chess.scan_forward(rooks):
        fmask = chess.BB_FILES[chess.square_file(sq)]
        if not fmask & b.pawns:
            open_files += 1
        elif not fmask & own_pawns:
            semi_open += 1

    outposts = 0
    own_pawn_att = _pawn_attacks(own_pawns, us)
    enemy_pawns = b.pawns & opp
    for sq in chess.scan_forward(b.knights & own):
        rel_rank = chess.square_rank(sq) if us == chess.WHITE else 7 - chess.square_rank(sq)
        if 3 <= rel_rank <= 5 and own_pawn_att & chess.BB_SQUARES[sq] \
                and not _ADJ_AHEAD[us][sq] & enemy_pawns:
            outposts += 1

    pieces = own & ~b.kings
    n_pieces = pop(pieces)
    coordination = pop(pieces & att_us) / n_pieces if n_pieces else 0.0
    threat = _best_threat(b, opp & ~b.kings, att_us, att_them, own_pawn_att)

    npm = (pop(b.knights) + pop(b.bishops) + 2 * pop(b.rooks) + 4 * pop(b.queens))

    values = (
        mat,
        exposure_us,
        _passed(b, us) / 8.0,
        isolated / 8.0,
        doubled / 8.0,
        center_us / 8.0,
        mob_us / 80.0,
        mob_them / 80.0,
        rook_activity,
        1.0 if pop(b.bishops & own) >= 2 else 0.0,
        outposts / 2.0,
        coordination,
        _shield(b, us) / 3.0,
        _shield(b, them) / 3.0,
        open_files / 2.0,
        semi_open / 2.0,
        npm / 24.0,
        exposure_them,
        _passed(b, them) / 8.0,
        threat / 9.0,
    )
    return np.array([_clamp(v) for v in values], dtype=np.float64)


@dataclass(frozen=True)
class GameState:
    """What the context features need beyond the position itself."""

    ply: int = 0
    ply_cap: int = 200
    last_move_capture: bool = False


def extract_context(pos: Position, state: GameState, n_legal: int | None = None) -> np.ndarray:
    b = pos.raw
    us = b.turn
    if n_legal is None:
        n_legal = b.legal_moves.count()
    own, opp = b.occupied_co[us], b.occupied_co[not us]
    npm = (chess.popcount(b.knights) + chess.popcount(b.bishops)
           + 2 * chess.popcount(b.rooks) + 4 * chess.popcount(b.queens))
    mat = 0.5 + (_material(b, own) - _material(b, opp)) / (2.0 * MAX_MATERIAL)
    values = (
        min(state.ply / state.ply_cap, 1.0) if state.ply_cap > 0 else 1.0,
        npm / 24.0,
        1.0 if us == chess.WHITE else 0.0,
        1.0 if b.is_check() else 0.0,
        mat,
        1.0 if state.last_move_capture else 0.0,
        b.halfmove_clock / 100.0,
        n_legal / MAX_LEGAL,
    )
    return np.array([_clamp(v) for v in values], dtype=np.float64)


def extract_dist_shape(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("distribution shape needs a non-empty probability vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability vector")
    n = p.size
    if n == 1:
        entropy = 0.0
    else:
        nz = p[p > 0]
        entropy = float(-(nz * np.log(nz)).sum() / math.log(n))
    top = np.sort(p)[::-1]
    top1 = float(top[0])
    gap = top1 - (float(top[1]) if n > 1 else 0.0)
    return np.array([_clamp(entropy), _clamp(top1), _clamp(gap), _clamp(n / MAX_LEGAL)])
