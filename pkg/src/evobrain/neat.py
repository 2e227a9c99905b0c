"""Minimal NEAT: per-module feed-forward genomes, operators and activation.

No speciation.  Innovation numbers for the initial fully connected topology
are a fixed function of (input, output) so every genome in a run aligns on
them; structural mutations draw fresh numbers from a shared counter.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

INPUT, HIDDEN, OUTPUT = "input", "hidden", "output"
GENOME_FORMAT = "evobrain-genome"
GENOME_VERSION = 1

# first id handed out by the counter; stays clear of initial innovations
# (at most 31 * 16) and of input/output node ids
COUNTER_START = 1000


class DimensionError(ValueError):
    pass


class CycleError(ValueError):
    pass


class CheckpointVersionError(ValueError):
    pass


class InnovationCounter:
    """Shared source of innovation numbers and hidden-node ids."""

    def __init__(self, start: int = COUNTER_START):
        self._next = start
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            return value

    @property
    def value(self) -> int:
        return self._next


@dataclass(frozen=True)
class MutationConfig:
    perturb_fraction: float = 0.80
    perturb_sigma: float = 0.3
    add_node_prob: float = 0.03
    add_conn_prob: float = 0.05
    wiring_prob: float = 0.10

    def __post_init__(self):
        for name in ("perturb_fraction", "add_node_prob", "add_conn_prob", "wiring_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.perturb_sigma <= 0:
            raise ValueError("perturb_sigma must be positive")

    @classmethod
    def disabled(cls) -> "MutationConfig":
        return cls(0.0, 0.3, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: str


@dataclass(frozen=True)
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass(frozen=True)
class ModuleGenome:
    n_inputs: int
    n_outputs: int
    nodes: tuple[NodeGene, ...]
    conns: tuple[ConnGene, ...]

    @property
    def hidden_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role == HIDDEN]

    @cached_property
    def net(self) -> "Network":
        return Network(self)

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        roles = {n.id: n.role for n in self.nodes}
        if sum(r == INPUT for r in roles.values()) != self.n_inputs:
            raise DimensionError("input count mismatch")
        if sum(r == OUTPUT for r in roles.values()) != self.n_outputs:
            raise DimensionError("output count mismatch")
        innovs = [c.innovation for c in self.conns]
        if len(set(innovs)) != len(innovs):
            raise ValueError("duplicate innovation ids")
        pairs = [(c.src, c.dst) for c in self.conns]
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate connection between the same nodes")
        for c in self.conns:
            if c.src not in roles or c.dst not in roles:
                raise ValueError(f"connection {c.innovation} references a missing node")
            if roles[c.dst] == INPUT:
                raise ValueError("inputs cannot have incoming connections")
            if roles[c.src] == OUTPUT:
                raise ValueError("outputs cannot have outgoing connections")
            if not math.isfinite(c.weight):
                raise ValueError("non-finite weight")
        if _has_cycle(self.nodes, self.conns):
            raise CycleError("genome graph has a cycle")


def _has_cycle(nodes: Iterable[NodeGene], conns: Iterable[ConnGene]) -> bool:
    adj: dict[int, list[int]] = {n.id: [] for n in nodes}
    for c in conns:
        adj[c.src].append(c.dst)
    state: dict[int, int] = {}
    for root in adj:
        if root in state:
            continue
        stack = [(root, iter(adj[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            for nxt in it:
                s = state.get(nxt, 0)
                if s == 1:
                    return True
                if s == 0:
                    state[nxt] = 1
                    stack.append((nxt, iter(adj[nxt])))
                    break
            else:
                state[node] = 2
                stack.pop()
    return False


def _descendants(conns: Iterable[ConnGene]) -> dict[int, set[int]]:
    """Nodes reachable from each node (itself included), over all connections."""
    adj: dict[int, list[int]] = {}
    for c in conns:
        adj.setdefault(c.src, []).append(c.dst)
    memo: dict[int, set[int]] = {}

    def visit(root: int) -> set[int]:
        stack = [(root, iter(adj.get(root, ())))]
        while stack:
            n, it = stack[-1]
            child = next((m for m in it if m not in memo), None)
            if child is not None:
                stack.append((child, iter(adj.get(child, ()))))
                continue
            stack.pop()
            out = {n}
            for m in adj.get(n, ()):
                out |= memo[m]
            memo[n] = out
        return memo[root]

    for n in list(adj):
        if n not in memo:
            visit(n)
    return memo


def init_minimal(n_inputs: int, n_outputs: int, rng: np.random.Generator) -> ModuleGenome:
    if n_inputs < 1 or n_outputs < 1:
        raise ValueError("need at least one input and one output")
    nodes = tuple([NodeGene(i, INPUT) for i in range(n_inputs)]
                  + [NodeGene(n_inputs + j, OUTPUT) for j in range(n_outputs)])
    weights = rng.uniform(-1.0, 1.0, size=n_inputs * n_outputs)
    conns = tuple(
        ConnGene(i * n_outputs + j, i, n_inputs + j, float(weights[i * n_outputs + j]))
        for i in range(n_inputs) for j in range(n_outputs)
    )
    return ModuleGenome(n_inputs, n_outputs, nodes, conns)


def zero_genome(n_inputs: int, n_outputs: int) -> ModuleGenome:
    g = init_minimal(n_inputs, n_outputs, np.random.default_rng(0))
    return replace(g, conns=tuple(replace(c, weight=0.0) for c in g.conns))


# -- phenotype ----------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class Network:
    """Layered evaluation of a module genome.

    Nodes are grouped by longest enabled path from the inputs; all outputs sit
    in the last layer.  Each layer is a dense matrix over every node value, so
    a forward pass is a handful of mat-vec products.  Enabled connections keep
    a fixed slot in a flat weight vector, which is what plasticity edits.
    """

    def __init__(self, genome: ModuleGenome):
        self.n_inputs = genome.n_inputs
        self.n_outputs = genome.n_outputs
        enabled = [c for c in genome.conns if c.enabled]
        self.innovations = np.array([c.innovation for c in enabled], dtype=np.int64)
        self.base_weights = np.array([c.weight for c in enabled], dtype=np.float64)
        self.base_weights.setflags(write=False)

        roles = {n.id: n.role for n in genome.nodes}
        inputs = sorted(i for i, r in roles.items() if r == INPUT)
        outputs = sorted(i for i, r in roles.items() if r == OUTPUT)
        hidden = sorted(i for i, r in roles.items() if r == HIDDEN)

        incoming: dict[int, list[int]] = {i: [] for i in roles}
        for c in enabled:
            incoming[c.dst].append(c.src)
        depth = {i: 0 for i in inputs}

        def depth_of(node: int) -> int:
            # iterative longest-path depth; graph is acyclic
            stack = [node]
            while stack:
                n = stack[-1]
                if n in depth:
                    stack.pop()
                    continue
                pending = [s for s in incoming[n] if s not in depth]
                if pending:
                    stack.extend(pending)
                    continue
                depth[n] = 1 + max((depth[s] for s in incoming[n]), default=0)
                stack.pop()
            return depth[node]

        for h in hidden:
            depth_of(h)
        last = max([depth[h] for h in hidden] + [0]) + 1
        for o in outputs:
            depth[o] = last

        order = inputs + sorted(hidden, key=lambda h: (depth[h], h)) + outputs
        self.index = {nid: k for k, nid in enumerate(order)}
        self.n_nodes = len(order)
        self.output_index = np.array([self.index[o] for o in outputs], dtype=np.int64)

        self.layers = []
        self._layer_of_conn = np.empty(len(enabled), dtype=np.int64)
        self._flat_of_conn = np.empty(len(enabled), dtype=np.int64)
        self.src_index = np.array([self.index[c.src] for c in enabled], dtype=np.int64)
        for lvl in range(1, last + 1):
            targets = [n for n in order if n not in inputs and depth[n] == lvl]
            if not targets:
                continue
            rows = {n: r for r, n in enumerate(targets)}
            is_out = np.array([roles[n] == OUTPUT for n in targets])
            self.layers.append((np.array([self.index[n] for n in targets]), is_out, len(targets)))
            li = len(self.layers) - 1
            for k, c in enumerate(enabled):
                if c.dst in rows:
                    self._layer_of_conn[k] = li
                    self._flat_of_conn[k] = rows[c.dst] * self.n_nodes + self.index[c.src]
        self._base_mats = self.matrices(self.base_weights)

    def matrices(self, weights: np.ndarray) -> list[np.ndarray]:
        mats = []
        for li, (_, _, n_rows) in enumerate(self.layers):
            m = np.zeros(n_rows * self.n_nodes)
            sel = self._layer_of_conn == li
            m[self._flat_of_conn[sel]] = weights[sel]
            mats.append(m.reshape(n_rows, self.n_nodes))
        return mats

    def forward(self, inputs, weights: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return (outputs, all node values)."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.shape != (self.n_inputs,):
            raise DimensionError(f"expected {self.n_inputs} inputs, got {x.shape}")
        mats = self._base_mats if weights is None else self.matrices(weights)
        values = np.zeros(self.n_nodes)
        values[: self.n_inputs] = x
        for (targets, is_out, _), mat in zip(self.layers, mats):
            s = mat @ values
            values[targets] = np.where(is_out, _sigmoid(s), np.tanh(s))
        return values[self.output_index].copy(), values


def activate(genome: ModuleGenome, inputs) -> np.ndarray:
    return genome.net.forward(inputs)[0]


# -- operators ----------------------------------------------------------------

def mutate(genome: ModuleGenome, cfg: MutationConfig, counter: InnovationCounter,
           rng: np.random.Generator) -> ModuleGenome:
    conns = list(genome.conns)
    nodes = list(genome.nodes)
    if cfg.perturb_fraction > 0:
        for k, c in enumerate(conns):
            if c.enabled and rng.random() < cfg.perturb_fraction:
                conns[k] = replace(c, weight=c.weight + float(rng.normal(0.0, cfg.perturb_sigma)))

    if cfg.add_node_prob > 0 and rng.random() < cfg.add_node_prob:
        live = [k for k, c in enumerate(conns) if c.enabled]
        if live:
            k = live[int(rng.integers(len(live)))]
            old = conns[k]
            new_id = counter.next()
            conns[k] = replace(old, enabled=False)
            nodes.append(NodeGene(new_id, HIDDEN))
            conns.append(ConnGene(counter.next(), old.src, new_id, 1.0))
            conns.append(ConnGene(counter.next(), new_id, old.dst, old.weight))

    if cfg.add_conn_prob > 0 and rng.random() < cfg.add_conn_prob:
        existing = {(c.src, c.dst) for c in conns}
        sources = [n.id for n in nodes if n.role != OUTPUT]
        sinks = [n.id for n in nodes if n.role != INPUT]
        below = _descendants(conns)
        candidates = [(s, d) for s in sources for d in sinks
                      if s != d and (s, d) not in existing and s not in below.get(d, ())]
        if candidates:
            s, d = candidates[int(rng.integers(len(candidates)))]
            conns.append(ConnGene(counter.next(), s, d, float(rng.uniform(-1.0, 1.0))))

    return ModuleGenome(genome.n_inputs, genome.n_outputs, tuple(nodes), tuple(conns))


def crossover_modules(fitter: ModuleGenome, other: ModuleGenome, rng: np.random.Generator) -> ModuleGenome:
    """Matching genes pick a parent uniformly; the rest follow the fitter parent."""
    by_innov = {c.innovation: c for c in other.conns}
    conns = []
    for c in fitter.conns:
        match = by_innov.get(c.innovation)
        if match is not None and rng.random() < 0.5:
            conns.append(replace(c, weight=match.weight, enabled=match.enabled))
        else:
            conns.append(c)
    return ModuleGenome(fitter.n_inputs, fitter.n_outputs, fitter.nodes, tuple(conns))


# -- brain genome ---------------------------------------------------------------

SLOTS = ("perception", "memory", "affect", "attention", "dynamics",
         "personality", "integration", "learning")
PHASE1 = SLOTS[:5]
SLOT_DIMS = {
    "perception": (20, 8),
    "memory": (8, 4),
    "affect": (8, 5),
    "attention": (16, 4),
    "dynamics": (6, 2),
    "personality": (27, 8),
    "integration": (31, 16),
    "learning": (4, 6),
}
# five phase-1 blocks into personality, then the same five plus personality
# into integration
GAIN_NAMES = tuple(f"{s}->personality" for s in PHASE1) + \
    tuple(f"{s}->integration" for s in PHASE1 + ("personality",))
N_GAINS = len(GAIN_NAMES)


@dataclass(frozen=True)
class BrainGenome:
    modules: Mapping[str, ModuleGenome]
    gains: tuple[float, ...] = (1.0,) * N_GAINS
    lineage_id: int = 0
    parents: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))

    def __getitem__(self, slot: str) -> ModuleGenome:
        return self.modules[slot]

    def validate(self) -> None:
        if tuple(self.modules) != SLOTS:
            raise ValueError(f"brain genome needs slots {SLOTS}")
        for slot, (n_in, n_out) in SLOT_DIMS.items():
            g = self.modules[slot]
            if (g.n_inputs, g.n_outputs) != (n_in, n_out):
                raise DimensionError(f"{slot} must be {n_in}->{n_out}")
            g.validate()
        if len(self.gains) != N_GAINS or not all(math.isfinite(x) for x in self.gains):
            raise ValueError("bad inter-module gains")

    def with_id(self, lineage_id: int, parents: tuple[int, ...] = ()) -> "BrainGenome":
        return BrainGenome(dict(self.modules), self.gains, lineage_id, parents)


def random_brain(rng: np.random.Generator, lineage_id: int = 0) -> BrainGenome:
    modules = {s: init_minimal(*SLOT_DIMS[s], rng) for s in SLOTS}
    return BrainGenome(modules, (1.0,) * N_GAINS, lineage_id)


def zero_brain(lineage_id: int = 0) -> BrainGenome:
    return BrainGenome({s: zero_genome(*SLOT_DIMS[s]) for s in SLOTS}, (1.0,) * N_GAINS, lineage_id)


def mutate_brain(genome: BrainGenome, cfg: MutationConfig, counter: InnovationCounter,
                 rng: np.random.Generator) -> BrainGenome:
    # structural rates apply to each module independently
    modules = {s: mutate(genome.modules[s], cfg, counter, rng) for s in SLOTS}
    out = BrainGenome(modules, genome.gains, genome.lineage_id, genome.parents)
    return perturb_wiring(out, cfg, rng)


def perturb_wiring(genome: BrainGenome, cfg: MutationConfig, rng: np.random.Generator) -> BrainGenome:
    if cfg.wiring_prob <= 0 or rng.random() >= cfg.wiring_prob:
        return genome
    gains = list(genome.gains)
    k = int(rng.integers(len(gains)))
    gains[k] += float(rng.normal(0.0, cfg.perturb_sigma))
    return BrainGenome(dict(genome.modules), tuple(gains), genome.lineage_id, genome.parents)


def crossover(a: BrainGenome, b: BrainGenome, fitness_a: float, fitness_b: float,
              rng: np.random.Generator) -> BrainGenome:
    """Per-module NEAT crossover; ties treat ``a`` as the fitter parent."""
    fitter, other = (a, b) if fitness_a >= fitness_b else (b, a)
    modules = {s: crossover_modules(fitter.modules[s], other.modules[s], rng) for s in SLOTS}
    gains = tuple((x + y) / 2.0 for x, y in zip(a.gains, b.gains))
    return BrainGenome(modules, gains, fitter.lineage_id, (a.lineage_id, b.lineage_id))


# -- checkpoints ----------------------------------------------------------------

def module_to_dict(g: ModuleGenome) -> dict:
    return {
        "inputs": g.n_inputs,
        "outputs": g.n_outputs,
        "nodes": [{"id": n.id, "role": n.role} for n in sorted(g.nodes, key=lambda n: n.id)],
        "connections": [
            {"innovation": c.innovation, "from": c.src, "to": c.dst,
             "weight": c.weight, "enabled": c.enabled}
            for c in sorted(g.conns, key=lambda c: c.innovation)
        ],
    }


def module_from_dict(d: dict) -> ModuleGenome:
    nodes = tuple(NodeGene(int(n["id"]), n["role"]) for n in d["nodes"])
    conns = tuple(ConnGene(int(c["innovation"]), int(c["from"]), int(c["to"]),
                           float(c["weight"]), bool(c["enabled"])) for c in d["connections"])
    return ModuleGenome(int(d["inputs"]), int(d["outputs"]), nodes, conns)


def genome_to_dict(g: BrainGenome) -> dict:
    return {
        "format": GENOME_FORMAT,
        "version": GENOME_VERSION,
        "lineage_id": g.lineage_id,
        "parents": list(g.parents),
        "gains": list(g.gains),
        "modules": {s: module_to_dict(g.modules[s]) for s in SLOTS},
    }


def genome_from_dict(d: dict) -> BrainGenome:
    if d.get("format") != GENOME_FORMAT or d.get("version") != GENOME_VERSION:
        raise CheckpointVersionError(
            f"expected {GENOME_FORMAT} v{GENOME_VERSION}, got {d.get('format')} v{d.get('version')}")
    modules = {s: module_from_dict(d["modules"][s]) for s in SLOTS}
    g = BrainGenome(modules, tuple(d["gains"]), int(d["lineage_id"]), tuple(d.get("parents", ())))
    g.validate()
    return g


def dumps_genome(g: BrainGenome) -> str:
    return json.dumps(genome_to_dict(g), indent=1)


def loads_genome(text: str) -> BrainGenome:
    return genome_from_dict(json.loads(text))
