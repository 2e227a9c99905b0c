"""Within-game Hebbian plasticity.

Every enabled connection keeps its genetic base weight and a plastic current
weight.  After each brain move::

    w += eta * multiplier * a_pre * (r - b)     # reward-modulated Hebbian term
    w += anchor * (base - w)                    # pull back toward the genome
    w  = clip(w, base - drift, base + drift)
    b  = 0.9 * b + 0.1 * r                      # running reward baseline

Nothing here ever writes to a genome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .neat import SLOTS, BrainGenome

ETA = 0.01
ANCHOR = 0.01
DRIFT = 0.3
BASELINE_DECAY = 0.9
# modules whose learning rate the Learning module sets for the next game
MODULATED = ("perception", "memory", "affect", "attention", "dynamics", "personality")


@dataclass(frozen=True)
class ModulePlasticity:
    base: np.ndarray
    current: np.ndarray
    baseline: float = 0.0
    multiplier: float = 1.0


PlasticState = dict  # slot -> ModulePlasticity


def new_state(genome: BrainGenome) -> PlasticState:
    state = {}
    for s in SLOTS:
        base = genome.modules[s].net.base_weights
        state[s] = ModulePlasticity(base, base.copy())
    return state


def reset(state: PlasticState) -> PlasticState:
    """Current weights back to base and baselines to zero; multipliers persist."""
    return {s: replace(m, current=m.base.copy(), baseline=0.0) for s, m in state.items()}


def set_multipliers(state: PlasticState, multipliers: Mapping[str, float]) -> PlasticState:
    return {s: replace(m, multiplier=float(multipliers.get(s, 1.0))) for s, m in state.items()}


def weights(state: PlasticState) -> dict[str, np.ndarray]:
    return {s: m.current for s, m in state.items()}


def update_weights(base: np.ndarray, current: np.ndarray, a_pre: np.ndarray, r: float, b: float,
                   multiplier: float = 1.0) -> np.ndarray:
    w = current + ETA * multiplier * a_pre * (r - b)
    w = w + ANCHOR * (base - w)
    return np.clip(w, base - DRIFT, base + DRIFT)


def update_module(m: ModulePlasticity, a_pre: np.ndarray, r: float) -> ModulePlasticity:
    w = update_weights(m.base, m.current, a_pre, r, m.baseline, m.multiplier)
    return replace(m, current=w, baseline=BASELINE_DECAY * m.baseline + (1.0 - BASELINE_DECAY) * r)


def hebbian_update(state: PlasticState, genome: BrainGenome, node_values: Mapping[str, np.ndarray],
                   rewards: Mapping[str, float]) -> PlasticState:
    """Update every module that has both activations and a reward.

    ``node_values[slot]`` is the full node-value vector of that module's most
    recent forward pass; each connection reads its presynaptic value from it.
    """
    out = dict(state)
    for s, m in state.items():
        vals = node_values.get(s)
        if vals is None or s not in rewards or m.current.size == 0:
            continue
        a_pre = vals[genome.modules[s].net.src_index]
        out[s] = update_module(m, a_pre, rewards[s])
    return out


def max_drift(state: PlasticState) -> float:
    return max((float(np.max(np.abs(m.current - m.base))) for m in state.values() if m.current.size),
               default=0.0)


# -- rewards ------------------------------------------------------------------

@dataclass
class _Running:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def z(self, x: float) -> float:
        if self.n < 2:
            return 0.0
        sd = math.sqrt(self.m2 / (self.n - 1))
        return (x - self.mean) / sd if sd > 0 else 0.0


@dataclass(frozen=True)
class MoveRecord:
    agree: bool               # brain move matches the reference argmax
    agree_cartridge: bool     # brain move matches the cartridge argmax
    conf: float               # cartridge top-1 probability
    material_delta: float     # change in own material balance since the last own move
    affect_mean: float
    ply: int


def calibration(conf: float, agree: bool) -> float:
    a = 1.0 if agree else 0.0
    return conf * a + (1.0 - conf) * (1.0 - a)


class RewardTracker:
    """Running within-game statistics behind the per-module rewards."""

    def __init__(self, midpoint_ply: int):
        self.midpoint = midpoint_ply
        self.affect = _Running()
        self.material = _Running()
        self.first = _Running()
        self.second = _Running()

    def rewards(self, rec: MoveRecord) -> dict[str, float]:
        a = 1.0 if rec.agree else 0.0
        self.affect.push(rec.affect_mean)
        self.material.push(rec.material_delta)
        if rec.ply < self.midpoint:
            self.first.push(a)
            memory = 0.0
        else:
            self.second.push(a)
            memory = self.second.mean - self.first.mean
        if self.affect.n >= 3:
            affect = self.affect.z(rec.affect_mean) * self.material.z(rec.material_delta)
        else:
            affect = 0.0
        return {
            "perception": a,
            "personality": a,
            "integration": a,
            "learning": a,
            "dynamics": calibration(rec.conf, rec.agree_cartridge),
            "affect": affect,
            "attention": a if rec.conf > 0.5 else 0.5,
            "memory": memory,
        }


def module_reward(slot: str, rec: MoveRecord, tracker: RewardTracker | None = None) -> float:
    """Reward for one module given a fresh tracker (or a running one)."""
    return (tracker or RewardTracker(midpoint_ply=10**9)).rewards(rec)[slot]


# -- learning module ----------------------------------------------------------

def learning_inputs(result: float, final_material: float, mean_agree: float, mean_conf: float) -> np.ndarray:
    return np.array([result, final_material, mean_agree, mean_conf], dtype=np.float64)


def learning_module_pass(genome: BrainGenome, summary, weights: np.ndarray | None = None):
    """Rate multipliers in (0, 2) for the next game, plus the node values."""
    out, values = genome.modules["learning"].net.forward(summary, weights)
    mult = 2.0 * out
    return dict(zip(MODULATED, mult.tolist())), values
