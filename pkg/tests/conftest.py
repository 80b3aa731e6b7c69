import random
from pathlib import Path

import pytest

from ckb.core import Arc, CausalModel, NEGATIVE, Node, POSITIVE, Strength
from ckb.param import NoisyOr, Table

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def load_fixture(name: str) -> CausalModel:
    from ckb.lang import parse_model

    result = parse_model(fixture_text(name), path=str(FIXTURES / name))
    assert result.ok, [d.render() for d in result.diagnostics]
    return result.model


# -- random model generators ---------------------------------------------


def random_dag(rng: random.Random, n: int, p_arc: float = 0.3) -> CausalModel:
    """Random DAG over binary nodes; arcs respect a random node order."""
    ids = [f"n{i:02d}" for i in range(n)]
    order = ids[:]
    rng.shuffle(order)
    nodes = [Node(nid) for nid in ids]
    arcs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_arc:
                arcs.append(Arc(order[i], order[j]))
    return CausalModel(id="random", nodes=nodes, arcs=arcs)


def random_annotated(rng: random.Random, n: int, p_arc: float = 0.3,
                     p_negative: float = 0.3) -> CausalModel:
    """Random DAG whose arcs carry positive/negative influences and
    random strength levels (some arcs deliberately left unannotated)."""
    base = random_dag(rng, n, p_arc)
    levels = ("very_weak", "weak", "moderate", "strong", "very_strong")
    arcs = []
    for arc in base.arcs.values():
        influence = NEGATIVE if rng.random() < p_negative else POSITIVE
        strength = None
        if rng.random() < 0.8:
            strength = Strength(rng.choice(levels))
        arcs.append(Arc(arc.source, arc.target, influence=influence,
                        strength=strength))
    return CausalModel(id=base.id, nodes=base.nodes, arcs=arcs)


def random_parameterised(rng: random.Random, n: int,
                         p_arc: float = 0.35) -> CausalModel:
    """Random DAG over binary nodes with random noisy-or / table CPDs."""
    base = random_dag(rng, n, p_arc)
    distributions = {}
    for nid in base.nodes:
        parents = base.parents(nid)
        if not parents:
            p = rng.uniform(0.05, 0.95)
            distributions[nid] = Table((), ((p, 1.0 - p),))
        elif rng.random() < 0.5:
            pos, neg = {}, {}
            for pid in parents:
                prob = rng.uniform(0.1, 0.9)
                (neg if rng.random() < 0.3 else pos)[pid] = prob
            distributions[nid] = NoisyOr(pos=pos, neg=neg,
                                         leak=rng.uniform(0.0, 0.2))
        else:
            rows = []
            for _ in range(2 ** len(parents)):
                p = rng.uniform(0.02, 0.98)
                rows.append((p, 1.0 - p))
            distributions[nid] = Table(parents, tuple(rows))
    return CausalModel(id=base.id, nodes=base.nodes, arcs=base.arcs,
                       distributions=distributions)
