import random
from dataclasses import replace

import pytest

from ckb.checks import CheckConfig, run_checks
from ckb.core import (
    Arc,
    DictionaryEntry,
    NEGATIVE,
    Node,
    add_arc,
    add_node,
    new_model,
)
from ckb.errors import (
    CycleError,
    DuplicateNode,
    IncompleteAssignment,
    InvalidArgument,
    NotFound,
)
from ckb.lang import serialize_model
from ckb.ops import (
    bowtie_grow,
    diff,
    expand_arc,
    graph_stats,
    infer_transitive_claims,
    merge_nodes,
    reverse_bowtie_init,
    split_node,
)
from ckb.param import Gate

from conftest import load_fixture, random_dag
from oracles import has_cycle, reachable_sets


def model_from(*arcs, nodes=()):
    ids = sorted({nid for arc in arcs for nid in arc} | set(nodes))
    model = new_model("m")
    for nid in ids:
        model = add_node(model, Node(nid))
    for src, dst in arcs:
        model = add_arc(model, Arc(src, dst))
    return model


# -- reverse bow-tie -----------------------------------------------------------


def test_reverse_bowtie_basic():
    model = reverse_bowtie_init("resp", ["virus_enters_np"],
                                ["multi_organ_failure"])
    assert sorted(model.nodes) == ["multi_organ_failure", "virus_enters_np"]
    assert list(model.arcs) == [("virus_enters_np", "multi_organ_failure")]
    assert model.key_start == ("virus_enters_np",)
    assert model.key_end == ("multi_organ_failure",)


def test_reverse_bowtie_cross_product():
    model = reverse_bowtie_init("m", ["s1", "s2"], ["e1", "e2"])
    assert len(model.arcs) == 4


def test_reverse_bowtie_rejects_overlap():
    with pytest.raises(InvalidArgument):
        reverse_bowtie_init("m", ["a"], ["a"])
    with pytest.raises(InvalidArgument):
        reverse_bowtie_init("m", [], ["a"])


# -- expand_arc ----------------------------------------------------------------


def test_expand_arc_replaces_with_chain():
    model = reverse_bowtie_init("resp", ["virus_enters_np"],
                                ["multi_organ_failure"])
    grown = expand_arc(
        model, "virus_enters_np", "multi_organ_failure",
        [["urt_epithelial_infection", "alveolar_epithelial_infection"]],
    )
    assert len(grown.nodes) == 4
    assert ("virus_enters_np", "multi_organ_failure") not in grown.arcs
    assert ("virus_enters_np", "urt_epithelial_infection") in grown.arcs
    assert ("urt_epithelial_infection", "alveolar_epithelial_infection") in grown.arcs
    assert ("alveolar_epithelial_infection", "multi_organ_failure") in grown.arcs


def test_expand_arc_keep_leak_triggers_w102():
    model = reverse_bowtie_init("m", ["s"], ["e"])
    grown = expand_arc(model, "s", "e", [["m1"]], keep_leak=True)
    assert ("s", "e") in grown.arcs
    report = run_checks(grown, CheckConfig(enabled=("W102",)))
    assert report.summary.get("W102") == 1


def test_expand_arc_inherits_influence_on_first_hop():
    model = model_from()
    model = add_node(model, Node("a"))
    model = add_node(model, Node("b"))
    model = add_arc(model, Arc("a", "b", influence=NEGATIVE))
    grown = expand_arc(model, "a", "b", [["m1"]])
    assert grown.arcs[("a", "m1")].influence.kind == "negative"
    assert grown.arcs[("m1", "b")].influence.kind == "positive"


def test_expand_arc_cycle_detected():
    model = model_from(("a", "b"), ("b", "c"))
    with pytest.raises(CycleError):
        # pathway routes c's influence back through a: a -> b exists,
        # expanding (b, c) through a gives b -> a which closes a cycle
        expand_arc(model, "b", "c", [["a"]])


def test_expand_arc_unknown():
    model = model_from(("a", "b"))
    with pytest.raises(NotFound):
        expand_arc(model, "a", "ghost", [["m"]])
    with pytest.raises(InvalidArgument):
        expand_arc(model, "a", "b", [])


def test_expand_arc_preserves_reachability_random():
    rng = random.Random(53)
    for _ in range(40):
        model = random_dag(rng, rng.randint(2, 8), p_arc=0.4)
        if not model.arcs:
            continue
        src, dst = rng.choice(sorted(model.arcs))
        mediators = [f"m{i}" for i in range(rng.randint(1, 3))]
        grown = expand_arc(model, src, dst, [mediators],
                           keep_leak=rng.random() < 0.5)
        reach = reachable_sets(list(grown.nodes), list(grown.arcs))
        assert dst in reach[src]


def test_expand_then_contract_recovers_original():
    from ckb.core import remove_element

    model = model_from(("a", "b"), ("b", "c"))
    grown = expand_arc(model, "a", "b", [["m1", "m2"]])
    shrunk = remove_element(grown, "m1")
    shrunk = remove_element(shrunk, "m2")
    shrunk = add_arc(shrunk, Arc("a", "b"))
    assert shrunk == model


# -- bowtie_grow -----------------------------------------------------------------


def test_bowtie_grow_or_causes():
    model = add_node(new_model("m"), Node("critical"))
    grown = bowtie_grow(model, "critical", causes=["c1", "c2"], gate="or")
    assert grown.parents("critical") == ("c1", "c2")
    dist = grown.distributions["critical"]
    assert isinstance(dist, Gate) and dist.kind == "or"
    assert dist.parents == ("c1", "c2")


def test_bowtie_grow_consequences_tree():
    model = add_node(new_model("m"), Node("critical"))
    grown = bowtie_grow(model, "critical",
                        consequences=["k1", "k2", "k3"])
    assert grown.children("critical") == ("k1", "k2", "k3")
    assert "critical" not in grown.distributions


def test_bowtie_grow_descendant_cause_cycles():
    model = model_from(("critical", "down"))
    with pytest.raises(CycleError):
        bowtie_grow(model, "critical", causes=["down"])


# -- merge and split ---------------------------------------------------------------


def test_merge_builds_ranked_states():
    model = model_from(("disease_a", "common_child"),
                       ("disease_b", "common_child"))
    merged = merge_nodes(model, ["disease_a", "disease_b"], "disease",
                         ranking=["disease_a", "disease_b"])
    node = merged.nodes["disease"]
    assert node.states == ("disease_a", "disease_b", "none")
    assert node.ordered


def test_merge_dedupes_shared_child_arc():
    model = model_from(("a", "child"), ("b", "child"))
    merged = merge_nodes(model, ["a", "b"], "ab")
    assert list(merged.arcs) == [("ab", "child")]
    assert merged.arcs[("ab", "child")].influence.kind == "positive"


def test_merge_conflicting_influences_marked():
    model = new_model("m")
    for nid in ("a", "b", "child"):
        model = add_node(model, Node(nid))
    model = add_arc(model, Arc("a", "child"))
    model = add_arc(model, Arc("b", "child", influence=NEGATIVE))
    merged = merge_nodes(model, ["a", "b"], "ab")
    arc = merged.arcs[("ab", "child")]
    assert arc.influence.kind == "other"
    assert arc.influence.label == "merged-conflict"
    assert "a -> child" in arc.note


def test_merge_chain_back_cycles():
    model = model_from(("a", "c"), ("c", "b"))
    with pytest.raises(CycleError):
        merge_nodes(model, ["a", "b"], "ab")
    assert not has_cycle(list(model.nodes), list(model.arcs))


def test_merge_internal_arc_would_self_loop():
    model = model_from(("a", "b"))
    with pytest.raises(CycleError) as err:
        merge_nodes(model, ["a", "b"], "ab")
    assert err.value.cycle == ["a", "b"]


def test_merge_ranking_mismatch():
    model = model_from(nodes=("a", "b"))
    with pytest.raises(InvalidArgument):
        merge_nodes(model, ["a", "b"], "ab", ranking=["a", "ghost"])


def test_merge_folds_dictionary():
    model = model_from(nodes=("a", "b"))
    model = replace(model, dictionary={
        "a": DictionaryEntry(definition="Definition of a.", status="drafted"),
    })
    merged = merge_nodes(model, ["a", "b"], "ab")
    assert "from 'a': Definition of a." in merged.dictionary["ab"].definition


def test_split_reduces_fan_in():
    parents = [f"p{i}" for i in range(4)]
    arcs = [(p, "organ_state") for p in parents] + [("organ_state", "outcome")]
    model = model_from(*arcs)
    result = split_node(
        model,
        "organ_state",
        [Node("organ_dysfunction"), Node("organ_failure")],
        parent_assignment={
            "p0": ["organ_dysfunction"],
            "p1": ["organ_dysfunction"],
            "p2": ["organ_failure"],
            "p3": ["organ_failure"],
        },
        child_assignment={"outcome": ["organ_failure"]},
    )
    assert result.parents("organ_dysfunction") == ("p0", "p1")
    assert result.parents("organ_failure") == ("p2", "p3")
    assert result.children("organ_failure") == ("outcome",)
    assert "organ_state" not in result.nodes


def test_split_unassigned_arc():
    model = model_from(("p", "x"), ("x", "c"))
    with pytest.raises(IncompleteAssignment):
        split_node(model, "x", [Node("x1")], parent_assignment={},
                   child_assignment={"c": ["x1"]})


def test_split_without_arcs_is_replacement():
    model = model_from(nodes=("x", "other"))
    result = split_node(model, "x", [Node("x1"), Node("x2")],
                        parent_assignment={}, child_assignment={})
    assert sorted(result.nodes) == ["other", "x1", "x2"]


def test_split_duplicate_replacement():
    model = model_from(nodes=("x", "y"))
    with pytest.raises(DuplicateNode):
        split_node(model, "x", [Node("y")], parent_assignment={},
                   child_assignment={})


def test_merge_then_split_restores_arcs():
    model = model_from(("p1", "a"), ("p2", "b"), ("a", "c"), ("b", "d"))
    merged = merge_nodes(model, ["a", "b"], "ab")
    restored = split_node(
        merged,
        "ab",
        [Node("a"), Node("b")],
        parent_assignment={"p1": ["a"], "p2": ["b"]},
        child_assignment={"c": ["a"], "d": ["b"]},
    )
    assert set(restored.arcs) == set(model.arcs)
    assert sorted(restored.nodes) == sorted(model.nodes)


# -- transitive claims -----------------------------------------------------------


def test_transitive_fixture_single_claim():
    model = load_fixture("transitive.ckb")
    claims = infer_transitive_claims(model)
    assert len(claims) == 1
    claim = claims[0]
    assert claim.cause == "sars_cov_2_infection"
    assert claim.effect == "direct_viral_injury"
    assert claim.knowledge_type == "inferable"
    assert claim.source_kind == "inferred"
    assert claim.influence.kind == "positive"


def test_transitive_skips_direct_arcs():
    model = model_from(("a", "b"), ("b", "c"), ("a", "c"))
    assert infer_transitive_claims(model) == ()


def test_transitive_negative_hop_is_ambiguous():
    model = new_model("m")
    for nid in "abc":
        model = add_node(model, Node(nid))
    model = add_arc(model, Arc("a", "b", influence=NEGATIVE))
    model = add_arc(model, Arc("b", "c"))
    claims = infer_transitive_claims(model)
    assert len(claims) == 1
    assert claims[0].influence.kind == "other"
    assert claims[0].influence.label == "sign-ambiguous"
    # oracle: enumerate every path's sign profile
    from oracles import all_simple_paths

    paths = all_simple_paths(list(model.arcs), "a", "c")
    all_positive_path = any(
        all(model.arcs[(u, v)].influence.kind == "positive"
            for u, v in zip(p, p[1:]))
        for p in paths
    )
    assert not all_positive_path


def test_transitive_positive_when_any_all_positive_path():
    model = new_model("m")
    for nid in "abcd":
        model = add_node(model, Node(nid))
    model = add_arc(model, Arc("a", "b", influence=NEGATIVE))
    model = add_arc(model, Arc("b", "d"))
    model = add_arc(model, Arc("a", "c"))
    model = add_arc(model, Arc("c", "d"))
    claims = {(c.cause, c.effect): c for c in infer_transitive_claims(model)}
    assert claims[("a", "d")].influence.kind == "positive"


def test_transitive_matches_reachability_oracle():
    rng = random.Random(61)
    for _ in range(40):
        model = random_dag(rng, rng.randint(1, 10), p_arc=0.35)
        claims = infer_transitive_claims(model)
        got = {(c.cause, c.effect) for c in claims}
        closure = reachable_sets(list(model.nodes), list(model.arcs))
        expected = {
            (u, w)
            for u in model.nodes
            for w in closure[u]
            if (u, w) not in model.arcs and u != w
        }
        assert got == expected


def test_transitive_on_kb_runs_per_model():
    from conftest import FIXTURES
    from ckb.lang import parse_kb

    base = FIXTURES / "kb"
    kb = parse_kb((base / "covid.ckbkb").read_text(),
                  lambda ref: (base / ref).read_text()).kb
    claims = infer_transitive_claims(kb)
    details = {c.source_detail for c in claims}
    assert any("'framework'" in d for d in details)
    assert any("'resp'" in d for d in details)


def test_claims_jsonl():
    import json

    from ckb.ops import claims_to_jsonl

    claims = infer_transitive_claims(load_fixture("transitive.ckb"))
    lines = claims_to_jsonl(claims).splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["knowledge_type"] == "inferable"


# -- diff and stats -----------------------------------------------------------------


def test_diff_identity_empty():
    model = load_fixture("respiratory_mini.ckb")
    assert diff(model, model).empty


def test_diff_added_arc():
    model = model_from(("a", "b"), nodes=("c",))
    grown = add_arc(model, Arc("a", "c"))
    report = diff(model, grown)
    assert report.added_arcs == (("a", "c"),)
    assert not report.empty
    back = diff(grown, model)
    assert back.removed_arcs == (("a", "c"),)


def test_diff_modified_annotation():
    model = model_from(("a", "b"))
    changed = replace(model, arcs={
        ("a", "b"): Arc("a", "b", influence=NEGATIVE)})
    report = diff(model, changed)
    assert report.modified_arcs == (("a", "b"),)


def test_diff_metadata_changes_are_visible():
    model = model_from(("a", "b"))
    renamed = replace(model, purpose="new purpose")
    report = diff(model, renamed)
    assert report.changed_fields == ("purpose",)
    assert not report.empty


def test_diff_empty_iff_equal_random():
    rng = random.Random(67)
    for _ in range(25):
        a = random_dag(rng, rng.randint(1, 8))
        b = random_dag(rng, rng.randint(1, 8))
        assert diff(a, b).empty == (a == b)
        assert diff(a, a).empty


def test_graph_stats_twenty_nodes():
    stats = graph_stats(load_fixture("n20.ckb"))
    assert stats.n_nodes == 20
    assert stats.possible_arcs == 380
    assert stats.log2_possible_digraphs == 380
    assert stats.longest_path == 19


def test_graph_stats_empty():
    stats = graph_stats(new_model("m"))
    assert stats == type(stats)(0, 0, 0, 0, 0, 0, 0, 0)


def test_graph_stats_chain_of_five():
    model = model_from(("a", "b"), ("b", "c"), ("c", "d"), ("d", "e"))
    stats = graph_stats(model)
    assert stats.longest_path == 4
    assert stats.max_fan_in == 1
    assert stats.max_fan_out == 1
    assert stats.n_isolated == 0


def test_editing_safety_random_sequences():
    rng = random.Random(71)
    for _ in range(150):
        model = model_from(("a", "b"), ("b", "c"))
        for step in range(8):
            before = serialize_model(model)
            op = rng.randrange(5)
            try:
                if op == 0:
                    model = add_arc(model, Arc(rng.choice(sorted(model.nodes)),
                                               rng.choice(sorted(model.nodes))))
                elif op == 1:
                    ids = sorted(model.nodes)
                    model = merge_nodes(model, rng.sample(ids, 2), f"m{step}")
                elif op == 2 and model.arcs:
                    src, dst = rng.choice(sorted(model.arcs))
                    model = expand_arc(model, src, dst, [[f"x{step}"]],
                                       keep_leak=rng.random() < 0.5)
                elif op == 3:
                    nid = rng.choice(sorted(model.nodes))
                    model = split_node(
                        model, nid,
                        [Node(f"s{step}a"), Node(f"s{step}b")],
                        parent_assignment={
                            p: [f"s{step}a"] for p in model.parents(nid)},
                        child_assignment={
                            c: [f"s{step}b"] for c in model.children(nid)},
                    )
                else:
                    model = bowtie_grow(model, rng.choice(sorted(model.nodes)),
                                        causes=[f"c{step}"])
            except Exception:
                assert serialize_model(model) == before
        assert not has_cycle(list(model.nodes), list(model.arcs))
