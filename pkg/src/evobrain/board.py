"""Chess rules on immutable positions.

Rules come from python-chess; this module pins down the value semantics the
rest of the package relies on: positions are never mutated, legal moves come
back in a canonical sorted order, and game termination includes a ply cap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import chess

START_FEN = chess.STARTING_FEN
DEFAULT_PLY_CAP = 200

# piece type order used for attention vectors, piece weights and mover types
PIECE_TYPES = (chess.PAWN, chess.KNIGHT, chess.BISHOP, chess.ROOK, chess.QUEEN, chess.KING)
PIECE_NAMES = ("pawn", "knight", "bishop", "rook", "queen", "king")


class IllegalMoveError(ValueError):
    pass


class InvalidPositionError(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    from_square: int
    to_square: int
    promotion: int | None = None

    def __post_init__(self):
        if self.from_square == self.to_square:
            raise ValueError("move must change square")
        if self.promotion is not None:
            if self.promotion not in (chess.KNIGHT, chess.BISHOP, chess.ROOK, chess.QUEEN):
                raise ValueError(f"bad promotion piece {self.promotion}")
            if chess.square_rank(self.to_square) not in (0, 7):
                raise ValueError("promotion only on the back rank")

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.from_square, self.to_square, self.promotion or 0)

    def uci(self) -> str:
        return self.to_chess().uci()

    def to_chess(self) -> chess.Move:
        return chess.Move(self.from_square, self.to_square, self.promotion)

    @classmethod
    def from_chess(cls, mv: chess.Move) -> "Move":
        return cls(mv.from_square, mv.to_square, mv.promotion)

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        return cls.from_chess(chess.Move.from_uci(text))

    def __str__(self) -> str:
        return self.uci()


class Outcome(str, enum.Enum):
    WHITE_WIN = "white-win"
    BLACK_WIN = "black-win"
    DRAW = "draw"


class Termination(str, enum.Enum):
    CHECKMATE = "checkmate"
    STALEMATE = "stalemate"
    INSUFFICIENT_MATERIAL = "insufficient-material"
    FIFTY_MOVE = "fifty-move"
    REPETITION = "repetition"
    PLY_CAP = "ply-cap"


@dataclass(frozen=True)
class GameResult:
    outcome: Outcome
    termination: Termination

    def __post_init__(self):
        if self.termination is Termination.PLY_CAP and self.outcome is not Outcome.DRAW:
            raise ValueError("ply-cap termination is always a draw")

    def score_for(self, white: bool) -> float:
        """1 / 0.5 / 0 from the point of view of the given colour."""
        if self.outcome is Outcome.DRAW:
            return 0.5
        won = self.outcome is Outcome.WHITE_WIN
        return 1.0 if won == white else 0.0


class Position:
    """An immutable chess position.

    Wraps a ``chess.Board`` that is never handed out for mutation; every
    transition goes through :func:`apply_move` and produces a fresh object.
    """

    __slots__ = ("_board", "_key", "_legal")

    def __init__(self, board: chess.Board, _validated: bool = False):
        if not _validated:
            kings_w = board.kings & board.occupied_co[chess.WHITE]
            kings_b = board.kings & board.occupied_co[chess.BLACK]
            if chess.popcount(kings_w) != 1 or chess.popcount(kings_b) != 1:
                raise InvalidPositionError("exactly one king per colour required")
            if board.halfmove_clock < 0 or board.fullmove_number < 1:
                raise InvalidPositionError("bad move counters")
        self._board = board
        self._key = None
        self._legal = None

    @classmethod
    def from_fen(cls, fen: str) -> "Position":
        try:
            board = chess.Board(fen)
        except ValueError as exc:
            raise InvalidPositionError(str(exc)) from exc
        return cls(board)

    @classmethod
    def start(cls) -> "Position":
        return cls(chess.Board(), _validated=True)

    def fen(self) -> str:
        return self._board.fen()

    @property
    def board(self) -> chess.Board:
        """A copy of the underlying board (safe to mutate)."""
        return self._board.copy(stack=False)

    @property
    def raw(self) -> chess.Board:
        # read-only access for hot paths; callers must not mutate
        return self._board

    @property
    def white_to_move(self) -> bool:
        return self._board.turn == chess.WHITE

    @property
    def halfmove_clock(self) -> int:
        return self._board.halfmove_clock

    @property
    def fullmove_number(self) -> int:
        return self._board.fullmove_number

    @property
    def key(self) -> tuple:
        """Repetition key: placement, side to move, castling, legal ep square."""
        if self._key is None:
            b = self._board
            ep = b.ep_square if b.ep_square is not None and b.has_legal_en_passant() else None
            self._key = (
                b.pawns, b.knights, b.bishops, b.rooks, b.queens, b.kings,
                b.occupied_co[chess.WHITE], b.occupied_co[chess.BLACK],
                b.turn, b.castling_rights, ep,
            )
        return self._key

    def __eq__(self, other):
        if not isinstance(other, Position):
            return NotImplemented
        return self.fen() == other.fen()

    def __hash__(self):
        return hash(self.fen())

    def __repr__(self):
        return f"Position({self.fen()!r})"


def legal_moves(pos: Position) -> list[Move]:
    """All legal moves sorted by (from-square, to-square, promotion)."""
    if pos._legal is None:
        moves = [Move(m.from_square, m.to_square, m.promotion) for m in pos._board.legal_moves]
        moves.sort(key=lambda m: m.sort_key)
        pos._legal = tuple(moves)
    return list(pos._legal)


def apply_move(pos: Position, mv: Move) -> Position:
    cm = mv.to_chess()
    if not pos._board.is_legal(cm):
        raise IllegalMoveError(f"{mv.uci()} is not legal in {pos.fen()}")
    return _push(pos, cm)


def _push(pos: Position, cm: chess.Move) -> Position:
    board = pos._board.copy(stack=False)
    board.push(cm)
    return Position(board, _validated=True)


def is_capture(pos: Position, mv: Move) -> bool:
    return pos._board.is_capture(mv.to_chess())


def mover_piece_type(pos: Position, mv: Move) -> int:
    return pos._board.piece_type_at(mv.from_square)


def game_status(pos: Position, history: Sequence[Position] = (), ply: int | None = None,
                ply_cap: int = DEFAULT_PLY_CAP) -> GameResult | None:
    """Terminal status of ``pos`` or ``None`` while the game goes on.

    ``history`` holds every earlier position of the game (oldest first, not
    including ``pos``).  ``ply`` defaults to ``len(history)``.
    """
    b = pos._board
    if ply is None:
        ply = len(history)
    if not any(True for _ in b.generate_legal_moves()):
        if b.is_check():
            winner = Outcome.BLACK_WIN if b.turn == chess.WHITE else Outcome.WHITE_WIN
            return GameResult(winner, Termination.CHECKMATE)
        return GameResult(Outcome.DRAW, Termination.STALEMATE)
    if b.is_insufficient_material():
        return GameResult(Outcome.DRAW, Termination.INSUFFICIENT_MATERIAL)
    if b.halfmove_clock >= 100:
        return GameResult(Outcome.DRAW, Termination.FIFTY_MOVE)
    key = pos.key
    if sum(1 for h in history if h.key == key) >= 2:
        return GameResult(Outcome.DRAW, Termination.REPETITION)
    if ply >= ply_cap:
        return GameResult(Outcome.DRAW, Termination.PLY_CAP)
    return None


def perft(pos: Position, depth: int) -> int:
    """Leaf count of the legal move tree (bulk-counted at the last ply)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return _perft(pos.board, depth)


def _perft(board: chess.Board, depth: int) -> int:
    # push/pop on a private copy; the wrapper's copies dominate otherwise
    if depth == 0:
        return 1
    if depth == 1:
        return board.legal_moves.count()
    total = 0
    for m in list(board.legal_moves):
        board.push(m)
        total += _perft(board, depth - 1)
        board.pop()
    return total


def play_line(moves: Iterable[str], start: Position | None = None) -> list[Position]:
    """Positions visited by a UCI move list, starting position included."""
    pos = start or Position.start()
    out = [pos]
    for text in moves:
        pos = apply_move(pos, Move.from_uci(text))
        out.append(pos)
    return out


def pgn_light(moves: Sequence[Move], result: GameResult | None = None) -> str:
    """One game per line: UCI moves separated by spaces, then the result tag."""
    tag = "*"
    if result is not None:
        tag = {Outcome.WHITE_WIN: "1-0", Outcome.BLACK_WIN: "0-1", Outcome.DRAW: "1/2-1/2"}[result.outcome]
    return " ".join(m.uci() for m in moves) + (" " if moves else "") + tag
