import json

import pytest
from builders import fcc, rocksalt, submission_fixture

from philately.cif import emit_cif
from philately.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def nacl_cif(tmp_path):
    p = tmp_path / "nacl.cif"
    p.write_text(emit_cif(rocksalt(), "nacl"))
    return p


def test_parse(capsys, nacl_cif):
    code, out, _ = run(capsys, "parse", str(nacl_cif))
    assert code == EXIT_OK
    (s,) = json.loads(out)
    assert s["formula"] == "NaCl" and s["sites"] == 8 and s["cell"][:3] == [5.64] * 3


def test_validate(capsys, nacl_cif, tmp_path):
    code, out, _ = run(capsys, "validate", str(nacl_cif))
    assert code == EXIT_OK and json.loads(out)[0]["passed"]
    crowded = tmp_path / "crowded.cif"
    crowded.write_text(emit_cif(fcc("Ar", 0.6), "c"))
    code, out, _ = run(capsys, "validate", str(crowded))
    assert code == EXIT_DOMAIN and not json.loads(out)[0]["passed"]


def test_relax_writes_output(capsys, tmp_path):
    src = tmp_path / "ar.cif"
    s = fcc("Ar", 5.3)
    s = s.with_cart_coords(s.cart_coords + [[0.1, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]])
    src.write_text(emit_cif(s, "ar"))
    out_path = tmp_path / "out.cif"
    code, out, _ = run(capsys, "relax", str(src), "-o", str(out_path), "--fmax", "1e-3")
    (r,) = json.loads(out)
    assert code == EXIT_OK and r["converged"] and r["energy_final"] < r["energy_initial"]
    assert r["max_force"] <= 1e-3
    code, out, _ = run(capsys, "parse", str(out_path))
    assert code == EXIT_OK and json.loads(out)[0]["formula"] == "Ar"


def test_hull(capsys, tmp_path):
    p = tmp_path / "e.jsonl"
    rows = [{"id": "ab", "formula": "NaCl", "energy_per_atom": -1.0},
            {"id": "a3b", "formula": "Na3Cl", "energy_per_atom": -0.3}]
    p.write_text("\n".join(json.dumps(r) for r in rows))
    code, out, _ = run(capsys, "hull", str(p), "--ref", "Na=0", "--ref", "Cl=0")
    assert code == EXIT_OK
    res = {r["id"]: r for r in json.loads(out)}
    assert res["ab"]["stable"] and res["ab"]["e_above_hull"] == 0.0
    assert res["a3b"]["e_above_hull"] == pytest.approx(0.2, abs=1e-9)
    assert res["a3b"]["decomposition"] == pytest.approx({"Na": 0.5, "ab": 0.5})
    code, _, err = run(capsys, "hull", str(p), "--ref", "Na=zero")
    assert code == EXIT_DOMAIN and "bad --ref" in err


def test_submit_query_stats_leaderboard(capsys, tmp_path):
    files = []
    for name, text in submission_fixture():
        f = tmp_path / name
        f.write_text(text)
        files.append(str(f))
    store = str(tmp_path / "db")
    code, out, _ = run(capsys, "submit", *files, "--participant", "alice", "--store", store)
    status = json.loads(out)
    assert code == EXIT_OK and status["status"] == "evaluated"

    code, out, _ = run(capsys, "query", "--elements", "Ar", "--store", store)
    body = json.loads(out)
    assert code == EXIT_OK and body["total"] >= 2
    assert all("Ar" in r["elements"] and "structure" not in r for r in body["records"])
    code, out, _ = run(capsys, "query", "--formula", "Ar", "--cif", "--store", store)
    assert out.startswith("data_") and "_cell_length_a" in out

    stats_file = tmp_path / "stats.json"
    code, out, _ = run(capsys, "stats", "-o", str(stats_file), "--store", store)
    stats = json.loads(out)
    assert stats == json.loads(stats_file.read_text())
    assert sum(b["count"] for b in stats["e_hull_histogram"]["bins"]) == stats["record_count"] == 6

    code, out, _ = run(capsys, "leaderboard", "--store", store)
    (row,) = json.loads(out)
    assert row["participant"] == "alice"
    assert row["total_score"] == pytest.approx(status["score"]["total"])
    code, out, _ = run(capsys, "leaderboard", "--to", "2000-01-01", "--store", store)
    assert json.loads(out) == []


def test_submit_deferred_then_evaluate(capsys, tmp_path, nacl_cif):
    ar = tmp_path / "ar.cif"
    ar.write_text(emit_cif(fcc("Ar", 5.26), "ar"))
    store = str(tmp_path / "db")
    code, out, _ = run(capsys, "submit", str(ar), "--participant", "bob", "--no-process", "--store", store)
    created = json.loads(out)
    assert created["status"] == "received"
    code, out, _ = run(capsys, "evaluate", created["id"], "--store", store)
    assert code == EXIT_OK and json.loads(out)["status"] == "evaluated"
    code, _, err = run(capsys, "evaluate", "S999999", "--store", store)
    assert code == EXIT_DOMAIN and "404" in err


def test_errors(capsys, tmp_path):
    assert run(capsys)[0] == EXIT_USAGE
    assert run(capsys, "parse")[0] == EXIT_USAGE
    assert run(capsys, "--help")[0] == EXIT_OK
    code, _, err = run(capsys, "parse", str(tmp_path / "missing.cif"))
    assert code == EXIT_DOMAIN and "cannot read" in err
    bad = tmp_path / "bad.cif"
    bad.write_text("not a cif")
    assert run(capsys, "parse", str(bad))[0] == EXIT_DOMAIN
    cfg = tmp_path / "c.yaml"
    cfg.write_text("bogus: 1\n")
    assert run(capsys, "--config", str(cfg), "parse", str(bad))[0] == EXIT_USAGE
    code, _, err = run(capsys, "query", "--server", "http://127.0.0.1:9", "--timeout", "1")
    assert code == EXIT_DOMAIN and "cannot reach server" in err
