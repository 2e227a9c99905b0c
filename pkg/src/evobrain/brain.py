"""Signal pool, three-phase module cascade and imagination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .chain import ChainParams, neutral_params
from .neat import PHASE1, SLOT_DIMS, BrainGenome, DimensionError
from .features import N_CONTEXT, N_DIST_SHAPE, N_SENSORS

POOL_SIZE = N_SENSORS + N_CONTEXT + 3 + N_DIST_SHAPE
SENSOR_SLICE = slice(0, 20)
CONTEXT_SLICE = slice(20, 28)
WDL_SLICE = slice(28, 31)
DIST_SLICE = slice(31, 35)
CONTEXT_MATERIAL = 20 + 4

MEMORY_SMOOTHING = 0.3
N_MEMORY = SLOT_DIMS["memory"][1]

__all__ = [
    "POOL_SIZE", "assemble_pool", "initial_memory", "run_brain", "BrainPass",
    "neutral_params", "imagine", "perception_feel",
]


def assemble_pool(sensors, context, wdl, dist_shape) -> np.ndarray:
    """Concatenate [sensors | context | wdl | dist shape] into the 35-slot pool."""
    parts = [np.asarray(x, dtype=np.float64) for x in (sensors, context, wdl, dist_shape)]
    for part, size, name in zip(parts, (N_SENSORS, N_CONTEXT, 3, N_DIST_SHAPE),
                                ("sensors", "context", "wdl", "dist shape")):
        if part.shape != (size,):
            raise DimensionError(f"{name} must have length {size}, got {part.shape}")
    return np.concatenate(parts)


def initial_memory() -> np.ndarray:
    return np.full(N_MEMORY, 0.5)


@dataclass(frozen=True)
class BrainPass:
    outputs: dict[str, np.ndarray]       # per-module outputs (memory already smoothed)
    activations: dict[str, np.ndarray]   # per-module node values, for plasticity
    params: ChainParams
    memory: np.ndarray

    @property
    def affect_mean(self) -> float:
        return float(self.outputs["affect"].mean())


def run_brain(genome: BrainGenome, pool, memory_state, piece_attention,
              weights: Mapping[str, np.ndarray] | None = None) -> BrainPass:
    """One pass of the module cascade.

    ``weights`` optionally overrides each module's connection weights (the
    plastic copy); otherwise the genome's base weights are used.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.shape != (POOL_SIZE,):
        raise DimensionError(f"pool must have {POOL_SIZE} entries")
    att = np.asarray(piece_attention, dtype=np.float64)
    if att.shape != (6,):
        raise DimensionError("piece attention must have 6 entries")
    w = weights or {}

    def fire(slot, x):
        return genome.modules[slot].net.forward(x, w.get(slot))

    sensors, wdl, dist = pool[SENSOR_SLICE], pool[WDL_SLICE], pool[DIST_SLICE]
    inputs = {
        "perception": sensors,
        "memory": pool[CONTEXT_SLICE],
        "affect": np.concatenate([wdl, dist, pool[CONTEXT_MATERIAL:CONTEXT_MATERIAL + 1]]),
        "attention": np.concatenate([sensors[:10], att]),
        "dynamics": np.concatenate([wdl, dist[:3]]),
    }
    outputs: dict[str, np.ndarray] = {}
    acts: dict[str, np.ndarray] = {}
    for slot in PHASE1:
        outputs[slot], acts[slot] = fire(slot, inputs[slot])

    memory = (1.0 - MEMORY_SMOOTHING) * np.asarray(memory_state, dtype=np.float64) \
        + MEMORY_SMOOTHING * outputs["memory"]
    outputs["memory"] = memory

    g = genome.gains
    phase1 = [outputs[s] * g[k] for k, s in enumerate(PHASE1)]
    outputs["personality"], acts["personality"] = fire("personality", np.concatenate(phase1 + [dist]))
    phase1 = [outputs[s] * g[5 + k] for k, s in enumerate(PHASE1)]
    integ_in = np.concatenate(phase1 + [outputs["personality"] * g[10]])
    outputs["integration"], acts["integration"] = fire("integration", integ_in)

    return BrainPass(outputs, acts, ChainParams.from_unit(outputs["integration"]), memory.copy())


def perception_feel(genome: BrainGenome, sensors, weights: np.ndarray | None = None) -> float:
    return float(genome.modules["perception"].net.forward(sensors, weights)[0].sum())


def imagine(genome: BrainGenome, reshaped: np.ndarray, succ_sensors: np.ndarray, k: int = 3,
            candidates: np.ndarray | None = None, perception_weights: np.ndarray | None = None) -> int:
    """Index of the move whose successor feels best among the top ``k``.

    ``succ_sensors[i]`` holds the sensors of the position after move ``i``;
    ``candidates`` masks moves eligible for the lookahead (gate survivors).
    Ties go to the higher reshaped probability, then to canonical order.
    """
    p = np.asarray(reshaped, dtype=np.float64)
    idx = np.arange(p.size)
    if candidates is not None:
        idx = idx[np.asarray(candidates, dtype=bool)]
    order = sorted(idx.tolist(), key=lambda i: (-p[i], i))[:max(1, k)]
    if len(order) == 1:
        return order[0]
    best, best_key = order[0], None
    for i in order:
        key = (perception_feel(genome, succ_sensors[i], perception_weights), p[i], -i)
        if best_key is None or key > best_key:
            best, best_key = i, key
    return best

