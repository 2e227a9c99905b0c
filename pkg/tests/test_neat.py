import json
import math

import numpy as np
import pytest

from evobrain.neat import (SLOT_DIMS, SLOTS, CheckpointVersionError, ConnGene, CycleError, DimensionError,
                           InnovationCounter, ModuleGenome, MutationConfig, NodeGene, activate, crossover,
                           dumps_genome, genome_to_dict, init_minimal, loads_genome, mutate, mutate_brain,
                           perturb_wiring, random_brain, zero_brain, zero_genome)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_init_minimal_counts():
    g = init_minimal(20, 8, np.random.default_rng(0))
    assert len(g.nodes) == 28 and len(g.conns) == 160
    assert all(c.enabled and -1 <= c.weight <= 1 for c in g.conns)
    assert len(init_minimal(4, 6, np.random.default_rng(1)).conns) == 24


def test_zero_weights_give_half():
    out = activate(zero_genome(5, 3), np.arange(5.0))
    assert out.tolist() == [0.5, 0.5, 0.5]


def test_single_connection():
    g = ModuleGenome(1, 1, (NodeGene(0, "input"), NodeGene(1, "output")), (ConnGene(1, 0, 1, 0.7),))
    assert activate(g, [2.0])[0] == pytest.approx(_sigmoid(1.4), abs=1e-15)


def test_hidden_node():
    nodes = (NodeGene(0, "input"), NodeGene(1, "output"), NodeGene(5, "hidden"))
    conns = (ConnGene(1, 0, 1, 0.3, enabled=False), ConnGene(2, 0, 5, 1.0), ConnGene(3, 5, 1, 1.0))
    g = ModuleGenome(1, 1, nodes, conns)
    assert activate(g, [1.0])[0] == pytest.approx(_sigmoid(math.tanh(1.0)), abs=1e-15)
    assert activate(g, [1.0])[0] == pytest.approx(0.6814, abs=1e-3)  # quoted to 4 places; exact is 0.68170


def test_validation_errors():
    nodes = (NodeGene(0, "input"), NodeGene(1, "output"), NodeGene(2, "hidden"), NodeGene(3, "hidden"))
    cyc = ModuleGenome(1, 1, nodes, (ConnGene(1, 0, 2, 1.0), ConnGene(2, 2, 3, 1.0), ConnGene(3, 3, 2, 1.0),
                                     ConnGene(4, 3, 1, 1.0)))
    with pytest.raises(CycleError):
        cyc.validate()
    into_input = ModuleGenome(1, 1, nodes[:2], (ConnGene(1, 1, 0, 1.0),))
    with pytest.raises(ValueError):
        into_input.validate()
    with pytest.raises(DimensionError):
        activate(zero_genome(3, 1), [1.0, 2.0])


def test_mutation_disabled_is_identity():
    g = random_brain(np.random.default_rng(2))
    out = mutate_brain(g, MutationConfig.disabled(), InnovationCounter(), np.random.default_rng(3))
    assert genome_to_dict(out) == genome_to_dict(g)


def test_add_node_split():
    g = init_minimal(2, 1, np.random.default_rng(4))
    cfg = MutationConfig(perturb_fraction=0.0, add_node_prob=1.0, add_conn_prob=0.0, wiring_prob=0.0)
    child = mutate(g, cfg, InnovationCounter(), np.random.default_rng(5))
    disabled = [c for c in child.conns if not c.enabled]
    assert len(disabled) == 1
    old = disabled[0]
    (hid,) = child.hidden_ids
    into = [c for c in child.conns if c.dst == hid]
    out = [c for c in child.conns if c.src == hid]
    assert len(into) == 1 and into[0].src == old.src and into[0].weight == 1.0
    assert len(out) == 1 and out[0].dst == old.dst and out[0].weight == old.weight
    child.validate()


def test_random_mutations_stay_acyclic():
    rng = np.random.default_rng(6)
    counter = InnovationCounter()
    cfg = MutationConfig(add_node_prob=0.5, add_conn_prob=0.5)
    g = init_minimal(4, 3, rng)
    for _ in range(300):
        g = mutate(g, cfg, counter, rng)
        g.validate()
        assert np.all((activate(g, rng.normal(size=4)) > 0) & (activate(g, rng.normal(size=4)) < 1))


def test_self_crossover():
    g = random_brain(np.random.default_rng(7))
    child = crossover(g, g, 1.0, 1.0, np.random.default_rng(8))
    assert genome_to_dict(child)["modules"] == genome_to_dict(g)["modules"]


def test_crossover_disjoint_follows_fitter():
    a = random_brain(np.random.default_rng(9))
    counter = InnovationCounter(50_000)
    b = random_brain(np.random.default_rng(10))
    cfg = MutationConfig(perturb_fraction=0.0, add_node_prob=1.0, add_conn_prob=1.0, wiring_prob=0.0)
    b = mutate_brain(b, cfg, counter, np.random.default_rng(11))
    child = crossover(a, b, 0.2, 0.9, np.random.default_rng(12))
    for s in SLOTS:
        assert {c.innovation for c in child.modules[s].conns} == {c.innovation for c in b.modules[s].conns}
    assert child.gains == tuple((x + y) / 2 for x, y in zip(a.gains, b.gains))


def test_crossover_property():
    rng = np.random.default_rng(13)
    counter = InnovationCounter()
    cfg = MutationConfig(add_node_prob=0.3, add_conn_prob=0.3)
    pool = [random_brain(rng, i) for i in range(6)]
    for _ in range(1000):
        i, j = rng.choice(len(pool), 2, replace=False)
        child = crossover(pool[i], pool[j], float(rng.random()), float(rng.random()), rng)
        child = mutate_brain(child, cfg, counter, rng)
        child.validate()
        pool[int(rng.integers(len(pool)))] = child


def test_perturb_wiring():
    g = zero_brain()
    assert perturb_wiring(g, MutationConfig(wiring_prob=0.0), np.random.default_rng(0)).gains == g.gains
    rng = np.random.default_rng(14)
    cfg = MutationConfig(wiring_prob=1.0)
    for _ in range(10_000):
        h = perturb_wiring(g, cfg, rng)
        assert sum(x != y for x, y in zip(g.gains, h.gains)) <= 1
        g = h
    assert all(math.isfinite(x) for x in g.gains)


def test_slot_dimensions():
    g = random_brain(np.random.default_rng(15))
    for s, (n_in, n_out) in SLOT_DIMS.items():
        assert (g.modules[s].n_inputs, g.modules[s].n_outputs) == (n_in, n_out)
    assert len(g.gains) == 11


def test_innovation_counter_unique():
    c = InnovationCounter()
    ids = [c.next() for _ in range(100)]
    assert len(set(ids)) == 100


def test_checkpoint_roundtrip():
    rng = np.random.default_rng(16)
    g = mutate_brain(random_brain(rng, 5), MutationConfig(add_node_prob=1.0), InnovationCounter(), rng)
    back = loads_genome(dumps_genome(g))
    assert genome_to_dict(back) == genome_to_dict(g)
    x = rng.normal(size=20)
    assert np.array_equal(back.modules["perception"].net.forward(x)[0], g.modules["perception"].net.forward(x)[0])


def test_checkpoint_version_rejected():
    d = json.loads(dumps_genome(zero_brain()))
    d["version"] = 99
    with pytest.raises(CheckpointVersionError):
        loads_genome(json.dumps(d))


def test_mutation_config_validation():
    with pytest.raises(ValueError):
        MutationConfig(add_node_prob=1.5)
    with pytest.raises(ValueError):
        MutationConfig(perturb_sigma=0.0)
