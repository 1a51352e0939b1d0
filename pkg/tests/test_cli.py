import json
from pathlib import Path

import pytest

from periodic_resonances import cli


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.main([*argv, "--out", str(out)])
    dirs = sorted(out.iterdir()) if out.exists() else []
    return code, (dirs[-1] if dirs else None)


def test_bands_free(tmp_path):
    code, d = run(tmp_path, "bands", "--potential", "0")
    assert code == cli.EXIT_OK
    rows = (d / "bands.csv").read_text().splitlines()
    assert rows[0] == "band,left,right" and len(rows) == 2
    assert (d / "discriminant.svg").read_text().lstrip().startswith("<?xml")
    manifest = json.loads((d / "manifest.json").read_text())
    assert {f["file"] for f in manifest["files"]} == {"bands.csv", "bands.json", "discriminant.svg"}


def test_bands_two_periodic(tmp_path):
    code, d = run(tmp_path, "bands", "--potential", "2,0")
    assert code == cli.EXIT_OK
    doc = json.loads((d / "bands.json").read_text())
    assert len(doc["bands"]) == 2
    assert doc["bands"][0][1] == pytest.approx(0.0, abs=1e-10)


def test_malformed_potential_names_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"potential": {"p": 3, "values": [1, 2]}}))
    code, _ = run(tmp_path, "bands", "--config", str(cfg))
    assert code == cli.EXIT_USAGE
    assert "'p'" in capsys.readouterr().err


def test_unknown_command_is_usage_error(tmp_path):
    assert cli.main(["nonsense"]) == cli.EXIT_USAGE


def test_missing_L_is_usage_error(tmp_path):
    code, _ = run(tmp_path, "spectrum", "--potential", "0")
    assert code == cli.EXIT_USAGE


def test_spectrum_free_case(tmp_path, capsys):
    code, d = run(tmp_path, "spectrum", "--potential", "0", "--L", "500")
    assert code == cli.EXIT_OK
    doc = json.loads((d / "spectrum_report.json").read_text())
    entry = doc["spectra"][0]
    assert entry["free_case"]["match"]
    assert abs(entry["weight_sum"] - 1) <= 1e-10
    assert all(c["within_2"] for c in entry["band_counts"])
    assert "sum a_k" in capsys.readouterr().out


def test_resonances_lower_half_plane(tmp_path):
    code, d = run(tmp_path, "resonances", "--potential", "2,0", "--L", "401",
                  "--band", "0", "--side", "right")
    assert code == cli.EXIT_OK
    rows = (d / "resonances_L401_b0r.csv").read_text().splitlines()
    assert len(rows) > 1
    im_E = [float(r.split(",")[5]) for r in rows[1:]]
    assert all(x < 0 for x in im_E)


def test_classify_free_edge(tmp_path):
    code, d = run(tmp_path, "classify", "--potential", "0", "--L-grid", "100,200")
    assert code == cli.EXIT_OK
    doc = json.loads((d / "classify.json").read_text())
    left = [e for e in doc["edges"] if e["side"] == "left"][0]
    assert left["E0"] == pytest.approx(-2.0)
    assert left["analytic"][0]["case"] == "generic"


def test_verify_nongeneric_passes(tmp_path):
    code, d = run(tmp_path, "verify", "--potential", "2,0", "--L", "401", "--band", "0",
                  "--side", "right", "--threads", "2")
    assert code == cli.EXIT_OK
    doc = json.loads((d / "verify.json").read_text())
    assert doc["passed"]


def test_verify_exit_code_tracks_certificates(tmp_path):
    code, d = run(tmp_path, "verify", "--potential", "2,0", "--L", "400")
    doc = json.loads((d / "verify.json").read_text())
    assert all(r["theorem_empty"]["winding"] == 0 for r in doc["reports"])
    assert code == (cli.EXIT_OK if doc["passed"] else cli.EXIT_CERT)


def test_outputs_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out, t in ((a, "1"), (b, "4")):
        cli.main(["verify", "--potential", "2,0", "--L", "401", "--band", "0", "--side", "right",
                  "--threads", t, "--out", str(out)])
    da, db = next(a.iterdir()), next(b.iterdir())
    for name in ("verify.json", "edge_L401_b0r.svg", "regions_L401_b0r_n0.svg"):
        assert (da / name).read_bytes() == (db / name).read_bytes()


def test_scaling_command(tmp_path):
    code, d = run(tmp_path, "scaling", "--potential", "2,0", "--L-grid", "401,801",
                  "--band", "0", "--side", "right")
    doc = json.loads((d / "scaling.json").read_text())
    assert doc["studies"][0]["slope"] == pytest.approx(1.0, abs=0.2)
    assert code == cli.EXIT_OK


def test_scaling_rejects_mixed_residues(tmp_path):
    code, _ = run(tmp_path, "scaling", "--potential", "2,0", "--L-grid", "400,401")
    assert code == cli.EXIT_USAGE
