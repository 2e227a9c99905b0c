"""Desirability-domain reshaping of a predictor's move distribution.

Pipeline: gate, log-domain compression, five-band EQ, piece weights,
temperature softmax, saturation clamp, exploration mix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

N_BANDS = 5
SENSITIVITY = 0.4

# (low, high) per chain parameter, in Integration output order
PARAM_RANGES = (
    ("alpha", 0.3, 2.5),
    ("tau", 0.0, 0.3),
    ("g1", 0.1, 3.0),
    ("g2", 0.1, 3.0),
    ("g3", 0.1, 3.0),
    ("g4", 0.1, 3.0),
    ("g5", 0.1, 3.0),
    ("delta_t", -1.0, 1.0),
    ("sat_ceiling", 0.1, 1.0),
    ("explore_eps", 0.0, 0.3),
    ("w_pawn", 0.1, 3.0),
    ("w_knight", 0.1, 3.0),
    ("w_bishop", 0.1, 3.0),
    ("w_rook", 0.1, 3.0),
    ("w_queen", 0.1, 3.0),
    ("w_king", 0.1, 3.0),
)
PARAM_NAMES = tuple(name for name, _, _ in PARAM_RANGES)
_LOW = np.array([lo for _, lo, _ in PARAM_RANGES])
_HIGH = np.array([hi for _, _, hi in PARAM_RANGES])


@dataclass(frozen=True)
class ChainParams:
    alpha: float = 1.0
    tau: float = 0.0
    eq_gains: tuple[float, ...] = (1.0,) * N_BANDS
    delta_t: float = 0.0
    sat_ceiling: float = 1.0
    explore_eps: float = 0.0
    piece_weights: tuple[float, ...] = (1.0,) * 6

    def __post_init__(self):
        vec = self.as_vector()
        if vec.shape != (len(PARAM_RANGES),):
            raise ValueError("chain params need 5 EQ gains and 6 piece weights")
        bad = [n for n, v, lo, hi in zip(PARAM_NAMES, vec, _LOW, _HIGH) if not lo <= v <= hi]
        if bad:
            raise ValueError(f"chain params out of range: {bad}")

    @property
    def temperature(self) -> float:
        return 1.0 + 0.5 * self.delta_t

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.tau, *self.eq_gains, self.delta_t,
                         self.sat_ceiling, self.explore_eps, *self.piece_weights], dtype=np.float64)

    @classmethod
    def from_vector(cls, v) -> "ChainParams":
        v = [float(x) for x in v]
        return cls(v[0], v[1], tuple(v[2:7]), v[7], v[8], v[9], tuple(v[10:16]))

    @classmethod
    def from_unit(cls, u) -> "ChainParams":
        """Affine map of sixteen values in [0, 1] onto the parameter ranges."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (len(PARAM_RANGES),):
            raise ValueError(f"need {len(PARAM_RANGES)} unit values")
        return cls.from_vector(np.clip(_LOW + u * (_HIGH - _LOW), _LOW, _HIGH))

    def to_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, self.as_vector().tolist()))


def neutral_params() -> ChainParams:
    return ChainParams()


def band_sizes(n_moves: int) -> list[int]:
    base, rem = divmod(n_moves, N_BANDS)
    return [base + (1 if b < rem else 0) for b in range(N_BANDS)]


def band_of(rank: int, n_moves: int) -> int:
    """1-based EQ band of a probability rank; remainders go to the top bands."""
    if not 0 <= rank < n_moves:
        raise ValueError("rank out of range")
    edge = 0
    for b, size in enumerate(band_sizes(n_moves), start=1):
        edge += size
        if rank < edge:
            return b
    raise AssertionError("unreachable")


def _bands(probs: np.ndarray) -> np.ndarray:
    n = probs.size
    order = np.argsort(-probs, kind="stable")  # canonical order breaks ties
    sizes = band_sizes(n)
    per_rank = np.repeat(np.arange(N_BANDS), sizes)
    bands = np.empty(n, dtype=np.int64)
    bands[order] = per_rank
    return bands


def gate_mask(probs: np.ndarray, tau: float) -> np.ndarray:
    """Moves surviving the gate; if none do, the most probable move is exempt."""
    alive = probs > tau
    if not alive.any():
        alive = np.zeros_like(alive)
        alive[int(np.argmax(probs))] = True
    return alive


def saturate(p: np.ndarray, ceiling: float, alive: np.ndarray) -> np.ndarray:
    """Clamp entries at ``ceiling`` and hand the excess to unclamped survivors."""
    if ceiling * int(alive.sum()) < 1.0:
        return p
    p = p.copy()
    clamped = np.zeros_like(alive)
    for _ in range(p.size):
        over = alive & ~clamped & (p > ceiling)
        if not over.any():
            break
        clamped |= over
        free = alive & ~clamped
        rest = 1.0 - ceiling * clamped.sum()
        p[clamped] = ceiling
        mass = p[free].sum()
        if mass > 0:
            p[free] *= rest / mass
        elif free.any():
            p[free] = rest / free.sum()
    return p


@dataclass(frozen=True)
class Reshaped:
    probs: np.ndarray
    alive: np.ndarray


def reshape_full(logits, probs, mover_types, params: ChainParams) -> Reshaped:
    logits = np.asarray(logits, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    types = np.asarray(mover_types, dtype=np.int64)
    n = p.size
    if n == 0 or logits.shape != p.shape or types.shape != p.shape:
        raise ValueError("logits, probs and mover types must be aligned and non-empty")

    alive = gate_mask(p, params.tau)
    d = np.full(n, -np.inf)
    with np.errstate(divide="ignore"):
        d[alive] = params.alpha * np.log(p[alive])

    gains = np.log(np.asarray(params.eq_gains))
    d[alive] += gains[_bands(p)[alive]] * SENSITIVITY
    d[alive] += np.log(np.asarray(params.piece_weights))[types[alive]] * SENSITIVITY

    z = d[alive] / params.temperature
    z = np.exp(z - z.max())
    out = np.zeros(n)
    out[alive] = z / z.sum()

    out = saturate(out, params.sat_ceiling, alive)
    eps = params.explore_eps
    if eps > 0:
        out = (1.0 - eps) * out + eps / n
    return Reshaped(out, alive)


def reshape(logits, probs, mover_types, params: ChainParams) -> np.ndarray:
    return reshape_full(logits, probs, mover_types, params).probs


class TraceWriter:
    """Tab-separated per-move trace of chain parameters and distributions."""

    def __init__(self, stream: TextIO):
        self.stream = stream
        self.stream.write("\t".join(["game", "ply", *PARAM_NAMES, "moves", "pre", "post", "chosen"]) + "\n")

    def write(self, game: int, ply: int, params: ChainParams, moves, pre, post, chosen) -> None:
        fmt = lambda xs: ",".join(f"{x:.6g}" for x in xs)
        row = [str(game), str(ply), *(f"{v:.6g}" for v in params.as_vector()),
               ",".join(m.uci() for m in moves), fmt(pre), fmt(post), chosen.uci()]
        self.stream.write("\t".join(row) + "\n")

