import io
import json

import pytest

from ckb.cli import run
from ckb.lang import parse_model

from conftest import FIXTURES


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def fx(name: str) -> str:
    return str(FIXTURES / name)


def test_exit_clean_file_is_zero():
    code, out, err = invoke("check", fx("clean.ckb"))
    assert code == 0
    assert "0 error(s), 0 warning(s), 0 info(s)" in out


def test_exit_warnings_without_strict_is_zero():
    code, out, _ = invoke("check", fx("triangle.ckb"))
    assert code == 0
    assert "W102" in out


def test_exit_warnings_with_strict_is_one():
    code, _, _ = invoke("check", fx("triangle.ckb"), "--strict")
    assert code == 1


def test_exit_cycle_file_is_two():
    code, out, _ = invoke("check", fx("cycle.ckb"))
    assert code == 2
    assert "E004" in out


def test_exit_bad_flags_is_three():
    code, _, err = invoke("check", fx("clean.ckb"), "--bogus")
    assert code == 3
    assert "usage" in err.lower()


def test_exit_unknown_subcommand_is_three():
    code, _, _ = invoke("frobnicate")
    assert code == 3


def test_exit_missing_command_is_three():
    code, _, _ = invoke()
    assert code == 3


def test_exit_missing_file_is_two():
    code, _, err = invoke("stats", fx("no_such_file.ckb"))
    assert code == 2
    assert "error" in err.lower()


def test_stats_human_output():
    code, out, _ = invoke("stats", fx("n20.ckb"))
    assert code == 0
    assert "possible_arcs: 380" in out
    assert "log2_possible_digraphs: 380" in out


def test_check_config_overrides():
    code, out, _ = invoke(
        "check", fx("triangle.ckb"), "--config", "disable=W106,W102")
    assert code == 0
    assert "W102" not in out and "W106" not in out


def test_check_strict_respects_disable():
    code, _, _ = invoke("check", fx("triangle.ckb"), "--strict",
                        "--config", "disable=W102,W106")
    assert code == 0


def test_synth_writes_parameterised_model(tmp_path):
    out_file = tmp_path / "synth.ckb"
    code, out, err = invoke("synth", fx("route_mediated.ckb"),
                            "-o", str(out_file))
    assert code == 0
    result = parse_model(out_file.read_text())
    assert result.ok
    assert set(result.model.distributions) == set(result.model.nodes)


def test_synth_scale_override(tmp_path):
    out_file = tmp_path / "synth.ckb"
    code, _, _ = invoke("synth", fx("route_mediated.ckb"),
                        "--scale", "strong=0.9", "-o", str(out_file))
    assert code == 0
    assert "0.9" in out_file.read_text()


def test_infer_human_table():
    code, out, _ = invoke("infer", fx("parameterised.ckb"),
                          "--query", "infection")
    assert code == 0
    assert "probability" in out
    assert "infection" in out


def test_infer_with_evidence_by_state_name():
    code, out, _ = invoke("infer", fx("parameterised.ckb"),
                          "--query", "severity",
                          "--evidence", "infection=true")
    assert code == 0
    assert "severe" in out


def test_dsep_human():
    code, out, _ = invoke("dsep", fx("route_mediated.ckb"),
                          "--x", "virus_enters_np",
                          "--y", "multi_organ_failure")
    assert code == 0
    assert "d-separated: false" in out
    assert "witness:" in out


def test_audit_human():
    code, out, _ = invoke("audit", fx("violating_cpt.ckb"))
    assert code == 0
    assert "1 violation(s)" in out
    strict_code, _, _ = invoke("audit", fx("violating_cpt.ckb"), "--strict")
    assert strict_code == 1


def test_audit_unparameterised_is_error():
    code, _, err = invoke("audit", fx("triangle.ckb"))
    assert code == 2
    assert "error" in err


def test_claims_human():
    code, out, _ = invoke("claims", fx("transitive.ckb"))
    assert code == 0
    assert "sars_cov_2_infection -> direct_viral_injury" in out


def test_claims_on_manifest():
    code, out, _ = invoke("claims", fx("kb/covid.ckbkb"))
    assert code == 0
    assert "virus_enters_np -> multi_organ_failure" in out


def test_diff_human():
    code, out, _ = invoke("diff", fx("route_direct.ckb"),
                          fx("route_mediated.ckb"))
    assert code == 0
    assert "+ node urt_epithelial_infection" in out
    assert "- arc virus_enters_np -> multi_organ_failure" in out


def test_expand_writes_output(tmp_path):
    out_file = tmp_path / "expanded.ckb"
    code, _, _ = invoke(
        "expand", fx("route_direct.ckb"),
        "--arc", "virus_enters_np,multi_organ_failure",
        "--path", "urt_epithelial_infection,alveolar_epithelial_infection",
        "-o", str(out_file))
    assert code == 0
    result = parse_model(out_file.read_text())
    assert result.ok
    assert len(result.model.nodes) == 4


def test_export_dot_and_json(tmp_path):
    code, out, _ = invoke("export", fx("triangle.ckb"), "--to", "dot")
    assert code == 0
    assert out.startswith("digraph triangle {")
    code, out, _ = invoke("export", fx("triangle.ckb"), "--to", "json")
    assert code == 0
    assert json.loads(out)["kind"] == "model"


def test_export_kb_json():
    code, out, _ = invoke("export", fx("kb/covid.ckbkb"), "--to", "json")
    assert code == 0
    assert json.loads(out)["kind"] == "kb"


@pytest.mark.parametrize(
    "argv",
    [
        ("check", "triangle.ckb"),
        ("check", "kb/covid.ckbkb"),
        ("stats", "n20.ckb"),
        ("synth", "route_mediated.ckb"),
        ("infer", "parameterised.ckb", "--query", "infection,severity"),
        ("dsep", "route_mediated.ckb", "--x", "virus_enters_np",
         "--y", "multi_organ_failure"),
        ("audit", "violating_cpt.ckb"),
        ("claims", "transitive.ckb"),
        ("diff", "route_direct.ckb", "route_mediated.ckb"),
        ("expand", "route_direct.ckb", "--arc",
         "virus_enters_np,multi_organ_failure", "--path", "mediator"),
        ("export", "triangle.ckb", "--to", "json"),
    ],
)
def test_json_format_everywhere(argv):
    argv = [argv[0]] + [
        fx(a) if a.endswith(".ckb") or a.endswith(".ckbkb") else a
        for a in argv[1:]
    ]
    code, out, err = invoke(*argv, "--format", "json")
    assert code == 0, err
    json.loads(out)  # must parse as a single JSON document


def test_output_is_deterministic():
    first = invoke("check", fx("respiratory_mini.ckb"))
    second = invoke("check", fx("respiratory_mini.ckb"))
    assert first == second
    a = invoke("synth", fx("route_mediated.ckb"))
    b = invoke("synth", fx("route_mediated.ckb"))
    assert a == b


def test_check_accepts_multiple_files():
    code, out, _ = invoke("check", fx("triangle.ckb"), fx("stray_node.ckb"))
    assert code == 0
    assert "W102" in out and "W105" in out


def test_timestamps_opt_in():
    plain = invoke("stats", fx("n20.ckb"))
    assert "# generated" not in plain[1]
    stamped = invoke("stats", fx("n20.ckb"), "--timestamps")
    assert stamped[1].startswith("# generated")
