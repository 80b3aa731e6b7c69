import itertools
import random
from dataclasses import replace

import pytest

from ckb.core import (
    Arc,
    ENABLING,
    NEGATIVE,
    Node,
    Strength,
    add_arc,
    add_node,
    new_model,
    other_influence,
)
from ckb.errors import InvalidArgument, UnderspecifiedNode, UnsupportedInfluence
from ckb.param import (
    Gate,
    NoisyMax,
    NoisyOr,
    StrengthScale,
    Table,
    build_gate_cpt,
    build_noisy_max_cpt,
    build_noisy_or_cpt,
    expand_distribution,
    synthesize,
)

from oracles import noisy_max_truth_table, noisy_or_truth_table


def test_noisy_or_single_cause_identity():
    table = build_noisy_or_cpt([0.8], leak=0.0)
    assert table.rows[0][0] == pytest.approx(0.8, abs=1e-12)
    assert table.rows[1][0] == pytest.approx(0.0, abs=1e-12)


def test_noisy_or_two_causes():
    table = build_noisy_or_cpt([0.8, 0.3], leak=0.0)
    assert table.rows[0][0] == pytest.approx(1 - 0.2 * 0.7, abs=1e-12)  # 0.86


def test_noisy_or_inhibitor():
    table = build_noisy_or_cpt([0.8], [0.5], leak=0.0)
    # both active: activation then multiplicative suppression
    assert table.rows[0][0] == pytest.approx(0.8 * 0.5, abs=1e-12)  # 0.40


def test_noisy_or_matches_latent_oracle():
    rng = random.Random(17)
    for n_pos in range(0, 4):
        for n_neg in range(0, 3):
            if n_pos + n_neg == 0:
                continue
            pos = [rng.uniform(0, 1) for _ in range(n_pos)]
            neg = [rng.uniform(0, 1) for _ in range(n_neg)]
            leak = rng.uniform(0, 0.3)
            table = build_noisy_or_cpt(pos, neg, leak)
            oracle = noisy_or_truth_table(pos, neg, leak)
            for row, expected in zip(table.rows, oracle):
                assert row[0] == pytest.approx(expected, abs=1e-12)


def test_noisy_or_textbook_oracle_up_to_ten_parents():
    rng = random.Random(29)
    for n in range(1, 11):
        pos = [rng.uniform(0.05, 0.95) for _ in range(n)]
        table = build_noisy_or_cpt(pos, leak=0.0)
        assert len(table.rows) == 2 ** n
        for config, row in zip(itertools.product((0, 1), repeat=n), table.rows):
            expected = 1.0
            for i, state in enumerate(config):
                if state == 0:
                    expected *= 1.0 - pos[i]
            expected = 1.0 - expected
            assert row[0] == pytest.approx(expected, abs=1e-12)


def test_noisy_or_rejects_out_of_range():
    with pytest.raises(InvalidArgument):
        build_noisy_or_cpt([1.2])
    with pytest.raises(InvalidArgument):
        build_noisy_or_cpt([0.5], leak=-0.1)


def test_noisy_max_binary_reduces_to_noisy_or():
    probs = [0.8, 0.3]
    tables = {"a": (0.8, 0.2), "b": (0.3, 0.7)}
    max_table = build_noisy_max_cpt(tables, ("a", "b"), (0.0, 1.0),
                                    parents=("a", "b"))
    or_table = build_noisy_or_cpt(probs, leak=0.0, parents=("a", "b"))
    for row_max, row_or in zip(max_table.rows, or_table.rows):
        assert row_max[0] == pytest.approx(row_or[0], abs=1e-15)


def test_noisy_max_all_inactive_gives_leak():
    leak = (0.1, 0.3, 0.6)
    table = build_noisy_max_cpt({"a": (0.5, 0.2, 0.3)}, ("a",), leak)
    assert table.rows[-1] == pytest.approx(leak, abs=1e-12)


def test_noisy_max_matches_latent_degree_oracle():
    tables = {"a": (0.7, 0.2, 0.1), "b": (0.3, 0.3, 0.4)}
    leak = (0.05, 0.1, 0.85)
    table = build_noisy_max_cpt(tables, ("a", "b"), leak, parents=("a", "b"))
    oracle = noisy_max_truth_table([tables["a"], tables["b"]], leak, 3)
    for row, expected in zip(table.rows, oracle):
        assert row == pytest.approx(expected, abs=1e-12)


def test_noisy_max_validates_ranking():
    with pytest.raises(InvalidArgument):
        NoisyMax(tables={"a": (0.5, 0.5)}, ranking=("b",), leak=(0.0, 1.0))


def test_gate_or_and():
    or_table = build_gate_cpt("or", 2, leak=0.0)
    # parents (T, F): row index 0*2 + 1 = 1
    assert or_table.rows[1][0] == 1.0
    and_table = build_gate_cpt("and", 2, leak=0.0)
    assert and_table.rows[1][0] == 0.0
    leaky = build_gate_cpt("or", 3, leak=0.1)
    assert leaky.rows[-1][0] == pytest.approx(0.1)


def test_gate_rejects_zero_arity():
    with pytest.raises(InvalidArgument):
        build_gate_cpt("or", 0)


def test_table_rows_must_sum_to_one():
    with pytest.raises(InvalidArgument):
        Table((), ((0.5, 0.4),))


# -- synthesis ----------------------------------------------------------------


def two_node(strength=None, influence=None):
    model = new_model("m")
    model = add_node(model, Node("a"))
    model = add_node(model, Node("b"))
    arc = Arc("a", "b", strength=strength,
              influence=influence if influence else Arc("a", "b").influence)
    return add_arc(model, arc)


def test_synthesize_chain_strong():
    model = two_node(strength=Strength("strong"))
    result = synthesize(model)
    table_a = expand_distribution(result.model, "a")
    assert table_a.rows[0][0] == pytest.approx(0.5)
    table_b = expand_distribution(result.model, "b")
    assert table_b.rows[0][0] == pytest.approx(0.8)  # parent active
    assert table_b.rows[1][0] == pytest.approx(0.0)  # parent inactive, leak 0
    assert result.notes == ()


def test_synthesize_missing_strength_notes_moderate():
    model = two_node()
    result = synthesize(model)
    assert len(result.notes) == 1
    note = result.notes[0]
    assert note.code == "I101" and note.severity == "info"
    assert "moderate" in note.message
    assert expand_distribution(result.model, "b").rows[0][0] == pytest.approx(0.5)


def test_synthesize_other_influence_requires_cpd():
    model = two_node(influence=other_influence("u-shaped"))
    with pytest.raises(UnsupportedInfluence):
        synthesize(model)
    parameterised = replace(
        model,
        distributions={
            "a": Table((), ((0.5, 0.5),)),
            "b": Table(("a",), ((0.2, 0.8), (0.9, 0.1))),
        },
    )
    result = synthesize(parameterised)
    assert result.model == parameterised


def test_synthesize_idempotent():
    model = two_node(strength=Strength("weak"))
    once = synthesize(model).model
    twice = synthesize(once)
    assert twice.model == once
    assert twice.notes == ()


def test_synthesize_negative_arc_becomes_inhibitor():
    model = new_model("m")
    for nid in ("p", "q", "child"):
        model = add_node(model, Node(nid))
    model = add_arc(model, Arc("p", "child", strength=Strength("strong")))
    model = add_arc(model, Arc("q", "child", influence=NEGATIVE,
                               strength=Strength("moderate")))
    dist = synthesize(model).model.distributions["child"]
    assert isinstance(dist, NoisyOr)
    assert dist.pos == {"p": 0.8}
    assert dist.neg == {"q": 0.5}


def test_synthesize_enabling_gates_positive_contribution():
    model = new_model("m")
    for nid in ("cause", "enabler", "effect"):
        model = add_node(model, Node(nid))
    model = add_arc(model, Arc("cause", "effect", strength=Strength("strong")))
    model = add_arc(model, Arc("enabler", "effect", influence=ENABLING))
    result = synthesize(model).model
    table = expand_distribution(result, "effect")
    # parents sorted: (cause, enabler); rows over their (state, state)
    rows = {config: row for config, row in
            zip(itertools.product((0, 1), repeat=2), table.rows)}
    assert rows[(0, 0)][0] == pytest.approx(0.8)  # cause active, enabled
    assert rows[(0, 1)][0] == pytest.approx(0.0)  # enabler off gates it
    assert rows[(1, 0)][0] == pytest.approx(0.0)
    assert rows[(1, 1)][0] == pytest.approx(0.0)


def test_synthesize_multistate_ordered_gets_graded_max():
    model = new_model("m")
    model = add_node(model, Node("cause"))
    model = add_node(model, Node("sev", states=("severe", "mild", "none"),
                                 ordered=True))
    model = add_arc(model, Arc("cause", "sev", strength=Strength("strong")))
    result = synthesize(model).model
    dist = result.distributions["sev"]
    assert isinstance(dist, NoisyMax)
    table = expand_distribution(result, "sev")
    assert table.rows[0][0] == pytest.approx(0.8)  # severe when cause active
    assert table.rows[1][-1] == pytest.approx(1.0)  # none when inactive (leak 0)


def test_synthesize_multistate_unordered_is_underspecified():
    model = new_model("m")
    model = add_node(model, Node("cause"))
    model = add_node(model, Node("sev", states=("severe", "mild", "none")))
    model = add_arc(model, Arc("cause", "sev"))
    with pytest.raises(UnderspecifiedNode):
        synthesize(model)


def test_synthesize_multistate_root_prior_split():
    model = add_node(new_model("m"), Node("sev", states=("a", "b", "c"),
                                          active_state=1))
    result = synthesize(model).model
    assert result.distributions["sev"].rows[0] == pytest.approx((0.25, 0.5, 0.25))


def test_strength_scale_custom_and_validation():
    scale = StrengthScale(strong=0.9, root_prior=0.3)
    model = two_node(strength=Strength("strong"))
    result = synthesize(model, scale).model
    assert expand_distribution(result, "b").rows[0][0] == pytest.approx(0.9)
    assert expand_distribution(result, "a").rows[0][0] == pytest.approx(0.3)
    with pytest.raises(InvalidArgument):
        StrengthScale(moderate=1.5)


def test_synthesized_rows_always_sum_to_one():
    import random as _random

    from conftest import random_annotated

    rng = _random.Random(41)
    for _ in range(30):
        model = random_annotated(rng, rng.randint(1, 8))
        result = synthesize(model).model
        for nid in result.nodes:
            for row in expand_distribution(result, nid).rows:
                assert sum(row) == pytest.approx(1.0, abs=1e-9)


def test_monotone_by_construction_exhaustive():
    # every positive parent raises P(active); negative parents lower it
    model = new_model("m")
    parents = [f"p{i}" for i in range(4)]
    for nid in parents + ["child"]:
        model = add_node(model, Node(nid))
    for i, pid in enumerate(parents):
        influence = NEGATIVE if i % 2 else Arc(pid, "child").influence
        model = add_arc(model, Arc(pid, "child", influence=influence,
                                   strength=Strength("strong")))
    table = expand_distribution(synthesize(model).model, "child")
    n = len(parents)
    for config in itertools.product((0, 1), repeat=n):
        for i, pid in enumerate(parents):
            if config[i] != 0:
                continue
            off = list(config)
            off[i] = 1
            row_on = table.rows[int("".join(map(str, config)), 2)]
            row_off = table.rows[int("".join(map(str, off)), 2)]
            if i % 2:  # negative parent
                assert row_on[0] <= row_off[0] + 1e-12
            else:
                assert row_on[0] >= row_off[0] - 1e-12


def test_gate_expansion_uses_active_states():
    model = new_model("m")
    model = add_node(model, Node("p", states=("off", "on"), active_state=1))
    model = add_node(model, Node("c"))
    model = add_arc(model, Arc("p", "c"))
    model = replace(model, distributions={
        "p": Table((), ((0.5, 0.5),)),
        "c": Gate(kind="or", parents=("p",)),
    })
    table = expand_distribution(model, "c")
    assert table.rows[0][0] == 0.0  # p=off -> gate not fired
    assert table.rows[1][0] == 1.0  # p=on (its active state)
