import pytest

from evobrain.board import (IllegalMoveError, InvalidPositionError, Move, Outcome, Position, Termination,
                            apply_move, game_status, is_capture, legal_moves, perft, play_line)

# Published node counts (chessprogramming perft tables and Marcel van
# Kervinck's random suite); no output of this package went into them.
PERFT_SUITE = [
    ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1", (20, 400, 8902, 197281)),
    ("r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1", (48, 2039, 97862, 4085603)),
    ("8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1", (14, 191, 2812, 43238)),
    ("r2q1rk1/pP1p2pp/Q4n2/bbp1p3/Np6/1B3NBn/pPPP1PPP/R3K2R b KQ - 0 1", (6, 264, 9467, 422333)),
    ("rnbq1k1r/pp1Pbppp/2p5/8/2B5/8/PPP1NnPP/RNBQK2R w KQ - 1 8", (44, 1486, 62379, 2103487)),
    ("r4rk1/1pp1qppp/p1np1n2/2b1p1B1/2B1P1b1/P1NP1N2/1PP1QPPP/R4RK1 w - - 0 10", (46, 2079, 89890, 3894594)),
    ("8/ppp3p1/8/8/3p4/5Q2/1ppp2K1/brk4n w - - 0 1", (27, 390, 9354, 134167)),
    ("8/6kR/8/8/8/bq6/1rqqqqqq/K1nqnbrq b - - 0 1", (7, 52, 4593, 50268)),
    ("rnb1kbnr/ppq1pppp/2pp4/8/6P1/2P5/PP1PPPBP/RNBQK1NR w KQkq - 0 1", (27, 734, 20553, 579004)),
    ("rnbqkbnr/pp1ppppp/2p5/8/6P1/2P5/PP1PPP1P/RNBQKBNR b KQkq - 0 1", (21, 463, 11138, 274234)),
]


@pytest.mark.parametrize("fen,counts", PERFT_SUITE[:4] + PERFT_SUITE[6:], ids=lambda x: str(x)[:12])
def test_perft_shallow(fen, counts):
    pos = Position.from_fen(fen)
    for depth, expected in enumerate(counts[:3], start=1):
        assert perft(pos, depth) == expected


def test_start_moves():
    pos = Position.start()
    assert len(legal_moves(pos)) == 20
    assert perft(pos, 2) == 400


def test_stalemate_has_no_moves():
    pos = Position.from_fen("k7/2Q5/2K5/8/8/8/8/8 b - - 0 1")
    assert legal_moves(pos) == []
    res = game_status(pos, [])
    assert res.outcome == Outcome.DRAW and res.termination == Termination.STALEMATE


def test_apply_e4():
    # en passant square only written when a capture is actually possible
    pos = apply_move(Position.start(), Move.from_uci("e2e4"))
    assert pos.fen() == "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq - 0 1"
    assert not pos.white_to_move


def test_capture_resets_halfmove():
    pos = Position.from_fen("4k3/8/8/3p4/8/8/8/3RK3 w - - 7 30")
    mv = Move.from_uci("d1d5")
    assert is_capture(pos, mv)
    assert apply_move(pos, mv).halfmove_clock == 0


def test_immutable_and_illegal():
    pos = Position.start()
    fen = pos.fen()
    apply_move(pos, Move.from_uci("g1f3"))
    assert pos.fen() == fen
    with pytest.raises(IllegalMoveError):
        apply_move(pos, Move.from_uci("e2e5"))
    with pytest.raises(InvalidPositionError):
        Position.from_fen("not a fen")


def test_legal_moves_sorted():
    moves = legal_moves(Position.start())
    assert moves == sorted(moves, key=lambda m: m.sort_key)


def test_fools_mate():
    line = play_line(["f2f3", "e7e5", "g2g4", "d8h4"])
    res = game_status(line[-1], line[:-1])
    assert res.outcome == Outcome.BLACK_WIN and res.termination == Termination.CHECKMATE
    assert res.score_for(False) == 1.0 and res.score_for(True) == 0.0


def test_threefold():
    line = play_line(["g1f3", "g8f6", "f3g1", "f6g8"] * 2)
    res = game_status(line[-1], line[:-1])
    assert res is not None and res.termination == Termination.REPETITION
    assert game_status(line[4], line[:4]) is None


def test_ply_cap():
    pos = Position.start()
    res = game_status(pos, [], ply=120, ply_cap=120)
    assert res.outcome == Outcome.DRAW and res.termination == Termination.PLY_CAP
    assert game_status(pos, [], ply=119, ply_cap=120) is None


def test_position_equality_by_fen():
    a = Position.start()
    b = Position.from_fen(a.fen())
    assert a == b and hash(a) == hash(b)
