"""Exit codes, artifact formats, and byte determinism of the CLI."""

import json
import xml.etree.ElementTree as ET

import pytest

from otiso import cli


def run(*argv):
    return cli.main(list(argv))


def test_check_ball_writes_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = run("check", "--family", "ball", "--dim", "3",
               "--quad-order", "16", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["id"] == "af1"
    assert data["verdict"] == "equality_within_tol"
    assert abs(data["ratio"] - 1.0) < 1e-10
    assert [lk["name"] for lk in data["links"]] == [
        "volume_to_transport", "transport_to_refined",
        "refined_to_curvature"]
    stdout = capsys.readouterr().out
    assert "verdict=equality_within_tol" in stdout


def test_check_af_family_writes_both_reports(tmp_path):
    out = tmp_path / "fam.json"
    code = run("check", "--family", "ellipsoid", "--axes", "1,1,2",
               "--quad-order", "32", "--ineq", "af_family",
               "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert [r["id"] for r in data] == ["af1", "af2"]


def test_check_output_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ("check", "--family", "ellipsoid", "--axes", "1,1,2",
            "--quad-order", "32")
    assert run(*args, "--out", str(a)) == 0
    assert run(*args, "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_perturbed_sphere_eps_value_flag(tmp_path, capsys):
    # small bump: chain holds; big bump: shape leaves the convexity cone
    # (cone exit only applies when the chain itself still holds)
    out = tmp_path / "r.json"
    assert run("check", "--family", "perturbed_sphere",
               "--eps-value", "0.2", "--quad-order", "16",
               "--out", str(out)) == 0
    data = json.loads(out.read_text())
    # a radial graph has no closed-form potential, so the bump took effect
    assert data["provenance"] == "geometry_only"
    assert data["ratio"] > 1.0 + 1e-8
    capsys.readouterr()
    assert run("check", "--family", "perturbed_sphere",
               "--eps-value", "2.0", "--quad-order", "16",
               "--out", str(out)) == 3


def test_planar_ellipse_needs_resolution(tmp_path, capsys):
    # the 2d chain is an identity (total turning 2 pi); a coarse grid
    # misses it beyond the chain tolerance and the run must say so
    args = ("check", "--family", "ellipsoid", "--axes", "1,2")
    assert run(*args, "--quad-order", "32",
               "--out", str(tmp_path / "coarse.json")) == 2
    capsys.readouterr()
    assert run(*args, "--quad-order", "192",
               "--out", str(tmp_path / "fine.json")) == 0
    data = json.loads((tmp_path / "fine.json").read_text())
    assert "boundary_case" in data["flags"]
    assert abs(data["ratio"] - 1.0) < 1e-9


def test_default_out_respects_env_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("OTISO_OUT_DIR", str(tmp_path))
    code = run("check", "--family", "ball", "--dim", "3",
               "--quad-order", "16")
    assert code == 0
    assert (tmp_path / "af1_report.json").exists()


@pytest.mark.parametrize("argv", [
    ("check",),                                              # no domain
    ("check", "--family", "ellipsoid", "--axes", "1,2", "--dim", "3"),
    ("check", "--family", "ellipsoid"),                      # missing axes
    ("check", "--family", "ball", "--radius", "-1"),
    ("check", "--domain", "/nonexistent/domain.json"),
    ("check", "--family", "ball", "--quad-order", "2"),
    ("check", "--family", "ball", "--dim", "2", "--ineq", "af2"),
    ("ot-solve", "--family", "ball", "--dim", "3"),
    ("sweep", "--family", "ball"),                           # missing --eps
])
def test_bad_configurations_exit_1(argv, capsys):
    assert run(*argv) == 1
    assert "error:" in capsys.readouterr().err


def test_domain_file_round_trip(tmp_path):
    domain = tmp_path / "dom.json"
    domain.write_text(json.dumps({
        "family": "ellipsoid", "dim": 3,
        "params": {"axes": [1.0, 1.0, 2.0]},
        "convexity_certificate": True,
    }))
    out = tmp_path / "r.json"
    code = run("check", "--domain", str(domain), "--quad-order", "32",
               "--out", str(out))
    assert code == 0
    assert json.loads(out.read_text())["verdict"] == "holds"


def test_sweep_csv_header_and_monotone_ratio(tmp_path):
    out = tmp_path / "sweep.csv"
    svg = tmp_path / "sweep.svg"
    code = run("sweep", "--family", "perturbed_sphere", "--dim", "3",
               "--eps", "0,0.05,0.1", "--quad-order", "24",
               "--out", str(out), "--svg", str(svg))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "eps,lhs,rhs,ratio,min_cone_margin"
    assert len(lines) == 4
    rows = [line.split(",") for line in lines[1:]]
    ratios = [float(r[3]) for r in rows]
    assert abs(ratios[0] - 1.0) < 1e-9     # the ball is the sharp case
    assert ratios == sorted(ratios)
    assert all(float(r[4]) > 0.0 for r in rows)
    # the plot is well-formed svg with one polyline and one mark per row
    root = ET.fromstring(svg.read_text())
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 1
    assert len(root.findall(f"{ns}circle")) == 3


def test_sweep_is_byte_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert run("sweep", "--family", "perturbed_sphere",
                   "--eps", "0,0.1", "--quad-order", "16",
                   "--out", str(out)) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_identities_all_pass(tmp_path, capsys):
    out = tmp_path / "identities.txt"
    code = run("identities", "--out", str(out))
    assert code == 0
    text = capsys.readouterr().out
    lines = [ln for ln in text.splitlines() if ln.strip()]
    assert len(lines) == 18
    assert all(ln.endswith("pass") for ln in lines)
    assert out.read_text() == text


def test_identities_fail_with_truncated_series(capsys):
    code = run("identities", "--series-K", "5")
    assert code == 2
    text = capsys.readouterr().out
    assert "FAIL" in text


def test_ot_solve_then_resume_is_stable(tmp_path, capsys):
    ckpt = tmp_path / "ckpt.json"
    code = run("ot-solve", "--family", "ball", "--dim", "2",
               "--targets", "64", "--out", str(ckpt))
    assert code == 0
    first = ckpt.read_bytes()
    stdout = capsys.readouterr().out
    assert "iter" in stdout and "mean map deviation" in stdout

    # a checkpoint is self-describing: no domain flags needed to resume
    code = run("ot-solve", "--resume", str(ckpt), "--out", str(ckpt))
    assert code == 0
    stdout = capsys.readouterr().out
    assert "0 additional iterations" in stdout
    assert ckpt.read_bytes() == first


def test_ot_solve_resume_rejects_garbage(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("ot-solve", "--resume", str(bad)) == 1


def test_check_semidiscrete_potential(tmp_path):
    out = tmp_path / "sd.json"
    code = run("check", "--family", "ball", "--dim", "2",
               "--potential", "semidiscrete", "--targets", "256",
               "--quad-order", "48", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["provenance"] == "semi_discrete"
    assert "hessian_psd_clamped" in data["flags"]
