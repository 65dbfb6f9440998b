import json
import math
import subprocess
import sys

import pytest

from liesym.cli import main
from liesym.pipeline import STAGES, RunConfig, RunReport, run_pipeline
from liesym.system import SystemDefError, bundled_systems, load_system, parse_system

GOLDEN_TEXT = """\
dim 2
vars x y
domain x in (0.1, 10)
domain y in (0.1, 10)
field X = [x, y]
symmetry X1 = [y, x]
symmetry X2 = [y^2/x, 0]
hamiltonian H = x/y
"""


@pytest.fixture(scope="module")
def tudoran_report():
    return run_pipeline(load_system(bundled_systems()["tudoran_2d.sys"]))


# --- system files ----------------------------------------------------------


def test_bundled_golden_system():
    s = load_system(bundled_systems()["tudoran_2d.sys"])
    assert (s.dim, s.p) == (2, 2)
    assert [str(H.expr) for H in s.hamiltonians] == ["x/y"]
    assert s.domain.intervals[0] == (0.1, 10.0)


def test_basename_fallback_to_bundled():
    assert load_system("examples/tudoran_2d.sys").label == "tudoran_2d"


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_system("nowhere/unknown_system.sys")


def test_missing_domain_is_unbounded():
    s = parse_system("vars x y\nfield X = [1, 0]\nsymmetry Y = [0, 1]\n")
    assert s.domain.intervals[1] == (-math.inf, math.inf)
    assert s.to_dict()["domain"]["y"] == ["-inf", "inf"]


def test_component_count_mismatch():
    with pytest.raises(SystemDefError) as info:
        parse_system(GOLDEN_TEXT.replace("field X = [x, y]", "field X = [x]"))
    assert info.value.errors == [(5, "dimension mismatch: field X has 1 components, expected 2")]


def test_empty_file_lists_every_problem():
    with pytest.raises(SystemDefError) as info:
        parse_system("")
    msgs = [m for _, m in info.value.errors]
    assert {"missing vars", "missing field", "missing symmetry"} <= set(msgs)


def test_parse_errors_are_batched():
    text = GOLDEN_TEXT.replace("[y, x]", "[y, x*]") + "bogus line\n"
    with pytest.raises(SystemDefError) as info:
        parse_system(text)
    lines = [ln for ln, _ in info.value.errors]
    assert 6 in lines and 9 in lines


def test_system_hash_tracks_content():
    a, b = parse_system(GOLDEN_TEXT), parse_system(GOLDEN_TEXT + "# comment\n")
    assert a.source_sha256 != b.source_sha256
    assert a.to_dict()["field"] == {"X": ["x", "y"]}


# --- pipeline --------------------------------------------------------------


def test_golden_pipeline_passes(tudoran_report):
    rep = tudoran_report
    assert rep.passed and rep.exit_code == 0
    assert [s.name for s in rep.stages] == list(STAGES)
    assert rep.stage("independence_filter").details["independent_count"] == 1


def test_pipeline_report_round_trip(tudoran_report):
    text = tudoran_report.to_json()
    again = RunReport.from_json(text)
    assert again.to_json() == text
    assert json.loads(text)["config"]["seed"] == 42


def test_dependent_symmetries_skip_downstream():
    s = parse_system(GOLDEN_TEXT.replace("symmetry X2 = [y^2/x, 0]", "symmetry X2 = [y, x]"))
    rep = run_pipeline(s)
    assert rep.stage("independence").status == "fail"
    for name in ("structure_functions", "integral_candidates", "poisson_pair", "reconstruction"):
        assert rep.stage(name).status == "skipped", name
    # the flow does not depend on the symmetries and still runs
    assert rep.stage("flow").status == "pass"
    assert rep.exit_code == 1


def test_escaping_bracket_fails_closure():
    rep = run_pipeline(load_system(bundled_systems()["bracket_escape_3d.sys"]))
    assert rep.stage("poisson_pair").status == "fail"
    assert "closure-failure" in json.dumps(rep.stage("poisson_pair").to_dict())
    assert rep.exit_code == 1


@pytest.mark.parametrize("name", ["commuting_2d.sys", "linear_3d.sys", "axisymmetric_3d.sys"])
def test_other_builtins_pass(name):
    rep = run_pipeline(load_system(bundled_systems()[name]), RunConfig(n_construction=50))
    assert rep.passed, rep.failed


def test_seed_changes_sample_dependent_output():
    s = load_system(bundled_systems()["tudoran_2d.sys"])
    a = run_pipeline(s, RunConfig(seed=1), ["commutation"]).to_json()
    b = run_pipeline(s, RunConfig(seed=2), ["commutation"]).to_json()
    assert a != b


# --- command line ----------------------------------------------------------


def test_cli_report_is_deterministic(capsys):
    outs = []
    for _ in range(2):
        assert main(["report", "examples/tudoran_2d.sys", "--json", "--seed", "42"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["system"]["label"] == "tudoran_2d"


def test_cli_text_output(capsys):
    assert main(["check", "tudoran_2d.sys"]) == 0
    out = capsys.readouterr().out
    assert "independence" in out and "commutation" in out


def test_cli_failure_exit_code(capsys):
    assert main(["poisson", "bracket_escape_3d.sys", "--json"]) == 1
    capsys.readouterr()


def test_cli_input_errors(capsys, tmp_path):
    assert main(["check", "missing.sys"]) == 2
    bad = tmp_path / "bad.sys"
    bad.write_text("vars x y\n")
    assert main(["check", str(bad)]) == 2
    assert main(["flow", "tudoran_2d.sys", "--x0", "1,2,3"]) == 2
    assert main(["nonsense"]) == 2
    assert "liesym: error" in capsys.readouterr().err


def test_cli_flow_options(capsys):
    code = main(["flow", "tudoran_2d.sys", "--json", "--x0", "1,2", "--t-end", "0.5"])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0
    assert rep["config"]["flow_t_end"] == 0.5


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "liesym", "check", "tudoran_2d.sys", "--json"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["stages"]
