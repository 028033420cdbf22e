from __future__ import annotations

import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from multiquilt import trees as T
from multiquilt.cli import cli

from conftest import metric


@pytest.fixture
def runner():
    return CliRunner()


def _ok(runner, args):
    res = runner.invoke(cli, args)
    assert res.exit_code == 0, res.output + res.stderr
    return json.loads(res.stdout)


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def test_record_layout(runner):
    rec = _ok(runner, ["faces", "--d", "3"])
    assert set(rec) == {"tool", "version", "schema", "command", "config", "seed", "result"}
    assert rec["command"] == "faces" and rec["config"] == {"d": 3, "out": None}


def test_faces_codim_one_count(runner):
    res = _ok(runner, ["faces", "--d", "3"])["result"]
    assert res["f_vector"] == [6, 6, 1]
    assert res["codim_one_count"] == 6


def test_enumerate(runner):
    res = _ok(runner, ["enumerate", "--d", "3"])["result"]
    assert res["count"] == 13 and sum(res["counts_by_dim"]) == 13
    res = _ok(runner, ["enumerate", "--d", "3", "--uncolored"])["result"]
    assert res["count"] == 3


def test_relations(runner, tmp_path, example_tree):
    res = _ok(runner, ["relations", "--tree", _write(tmp_path / "t.json", example_tree.to_dict())])
    assert res["result"]["rank"] == 4 and res["result"]["cone_dim"] == 4


def test_invalid_tree_is_a_domain_error(runner, tmp_path):
    bad = T.from_nested((True, ((True, (None, None)), None)), quilted=True).to_dict()
    res = runner.invoke(cli, ["relations", "--tree", _write(tmp_path / "t.json", bad)])
    assert res.exit_code == 1
    err = json.loads(res.stderr)
    assert err["error"]["type"] == "TreeError" and err["result"] is None


def test_glue_type1(runner, tmp_path):
    lo = _write(tmp_path / "lo.json", metric(T.top_stratum(2)).to_dict())
    up = _write(tmp_path / "up.json", metric(T.corolla(2)).to_dict())
    res = _ok(runner, ["glue", "--type", "1", "--delta", "0.01", "--lower", lo, "--upper", up,
                       "--leaf", "1"])["result"]
    assert res["admissible"] and res["R"] == pytest.approx(4.605170185988091)


def test_glue_leaves_count_from_one(runner, tmp_path):
    lo = _write(tmp_path / "lo.json", metric(T.top_stratum(2)).to_dict())
    up = _write(tmp_path / "up.json", metric(T.corolla(2)).to_dict())
    base = ["glue", "--type", "1", "--delta", "0.01", "--lower", lo, "--upper", up, "--leaf"]
    assert _ok(runner, base + ["1"])["result"]["tree"] == "([**]*)"
    assert _ok(runner, base + ["2"])["result"]["tree"] == "(*[**])"
    assert runner.invoke(cli, base + ["0"]).exit_code == 1
    assert runner.invoke(cli, base + ["3"]).exit_code == 1


def test_glue_type1_needs_leaf(runner, tmp_path):
    lo = _write(tmp_path / "lo.json", metric(T.top_stratum(2)).to_dict())
    up = _write(tmp_path / "up.json", metric(T.corolla(2)).to_dict())
    res = runner.invoke(cli, ["glue", "--type", "1", "--delta", "0.01", "--lower", lo, "--upper", up])
    assert res.exit_code == 1


def test_surface_with_svg(runner, tmp_path):
    tree = _write(tmp_path / "t.json", metric(T.facet_tree(T.Type2((1, 2)), 3)).to_dict())
    svg = tmp_path / "s.svg"
    rec = _ok(runner, ["surface", "--tree", tree, "--svg", str(svg)])
    assert rec["result"]["patches"]
    assert svg.read_text(encoding="utf-8").count('class="seam-branch"') == 2


def test_ainfty_check_identity_on_example(runner):
    res = _ok(runner, ["ainfty-check", "--example", "--identity", "--dmax", "4"])["result"]
    assert res["holds"]
    assert all(v == "0" for key in ("algebra", "bar", "functor") for v in res[key].values())


def test_ainfty_check_failure_exits_one(runner, tmp_path):
    from multiquilt import ainfty as A
    data = A.exterior_dga()
    data.mu[2][(0, 0)] = {0: A.Fraction(2)}
    res = runner.invoke(cli, ["ainfty-check", "--a", _write(tmp_path / "a.json", A.algebra_to_dict(data))])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"]["type"] == "DomainFailure"


def test_missing_file_is_a_usage_error(runner, tmp_path):
    res = runner.invoke(cli, ["relations", "--tree", str(tmp_path / "absent.json")])
    assert res.exit_code == 2


def test_missing_source_is_a_usage_error(runner):
    assert runner.invoke(cli, ["ainfty-check"]).exit_code == 2


def test_bad_mode_is_a_usage_error(runner):
    assert runner.invoke(cli, ["decay", "--mode", "zero"]).exit_code == 2


def test_numerics_domain_error(runner):
    res = runner.invoke(cli, ["decay", "--alpha", "1e-6"])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"]["type"] == "NumericsError"


def test_decay(runner):
    res = _ok(runner, ["decay", "--S", "4"])["result"]
    assert res["kappa_fit"] == pytest.approx(3.14159, rel=1e-3)
    assert all(q["holds"] or q["E_T"] <= 1.05 * q["bound"] for q in res["quantization"])


def test_preglue_plot_data(runner, tmp_path):
    plot = tmp_path / "eps.dat"
    res = _ok(runner, ["preglue", "--R", "6", "--R", "8", "--plot-data", str(plot)])["result"]
    assert res["log_slope"] < 0
    lines = plot.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# R eps" and len(lines) == 3


def test_glue_newton(runner):
    res = _ok(runner, ["glue-newton", "--R", "8", "--samples", "2"])["result"]
    run = res["runs"][0]
    assert run["converged"] and run["bound_ok"] and run["residuals"][-1] < 1e-10


def test_embed_and_surject(runner):
    rows = _ok(runner, ["embed", "--S", "4", "--trials", "5"])["result"]["rows"]
    assert len(rows) == 1 and rows[0]["ratio"] > 0
    res = _ok(runner, ["surject", "--R", "8", "--R", "9", "--candidates", "3"])["result"]
    assert res["passed"] and len(res["candidates"]) == 3


def test_config_file_sets_defaults(runner, tmp_path):
    cfg = _write(tmp_path / "c.json", {"faces": {"d": 2}})
    assert _ok(runner, ["--config", cfg, "faces"])["result"]["f_vector"] == [2, 1]


def test_out_file_is_byte_identical(runner, tmp_path):
    out = tmp_path / "rec.json"
    args = ["embed", "--S", "4", "--trials", "5", "--seed", "3", "--out", str(out)]
    assert runner.invoke(cli, args).exit_code == 0
    first = out.read_bytes()
    assert runner.invoke(cli, args).exit_code == 0
    assert out.read_bytes() == first


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "multiquilt", "faces", "--d", "2"],
                         capture_output=True, check=True)
    assert json.loads(res.stdout)["result"]["f_vector"] == [2, 1]
