import csv
import io
import json

import numpy as np
import pytest

from lmexpfam import bench
from lmexpfam.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, SEED_ENV, main
from lmexpfam.dataio import parse_zero_policy, read_composition_csv
from lmexpfam.errors import ConfigError, DataError

SMALL_DIRICHLET = dict(dimensions=(5,), n_samples=30, n_replicates=3, totals=(50.0,),
                       half_width=1.0, seed=7)
SMALL_AITCHISON = dict(model="Aitchison", initializers=("ALN",),
                       algorithms=("LMAdaptive", "NewtonRaphson"), dimensions=(3,),
                       n_samples=30, n_replicates=2, seed=8, burn_in=200, thin=2)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# CSV ingestion

def test_csv_closes_rows(tmp_path):
    y, names = read_composition_csv(_write(tmp_path, "2,3,5\n1,1,2\n"))
    assert names is None
    assert np.allclose(y, [[0.2, 0.3, 0.5], [0.25, 0.25, 0.5]], atol=1e-15)


def test_csv_closed_rows_unchanged(tmp_path, rng):
    y0 = rng.dirichlet(np.ones(4), 10)
    buf = io.StringIO()
    csv.writer(buf).writerows([[repr(float(v)) for v in row] for row in y0])
    y, _ = read_composition_csv(_write(tmp_path, buf.getvalue()))
    assert np.max(np.abs(y - y0)) < 1e-12


def test_csv_zero_rejected_with_position(tmp_path):
    with pytest.raises(DataError) as exc:
        read_composition_csv(_write(tmp_path, "a,b,c\n2,3,5\n1,0,1\n"))
    assert exc.value.row == 3 and exc.value.column == 2
    assert "row 3, column 2" in str(exc.value)


def test_csv_zero_replacement(tmp_path):
    y, _ = read_composition_csv(_write(tmp_path, "1,0,1\n"), zero_policy="replace:0.01")
    assert y[0, 1] == pytest.approx(0.01 / 1.01)
    assert y[0, 0] == pytest.approx(y[0, 2])
    assert y.sum() == pytest.approx(1.0)


def test_zero_policy_parsing():
    assert parse_zero_policy("reject") == ("reject", None)
    assert parse_zero_policy("replace:1e-3") == ("replace", 1e-3)
    for bad in ("drop", "replace:-1", "replace:0"):
        with pytest.raises(ValueError):
            parse_zero_policy(bad)


def test_csv_header_detection(tmp_path):
    y, names = read_composition_csv(_write(tmp_path, "x;y\n1;3\n", ), delimiter=";")
    assert names == ["x", "y"] and np.allclose(y, [[0.25, 0.75]])
    y, names = read_composition_csv(_write(tmp_path, "1;3\n"), delimiter=";", header=False)
    assert names is None and y.shape == (1, 2)


@pytest.mark.parametrize("text", ["", "a,b\n", "1,2\n1,2,3\n", "1,x\n", "1,nan\n"])
def test_csv_malformed(tmp_path, text):
    with pytest.raises(DataError):
        read_composition_csv(_write(tmp_path, text))


# configuration

def test_config_invariants():
    with pytest.raises(ConfigError):
        bench.BenchConfig(model="Aitchison", algorithms=("FPI",), initializers=("ALN",))
    with pytest.raises(ConfigError):
        bench.BenchConfig(initializers=("ALN",))
    with pytest.raises(ConfigError):
        bench.BenchConfig(algorithms=())
    with pytest.raises(ConfigError):
        bench.BenchConfig(algorithms=("Simplex",))
    with pytest.raises(ConfigError):
        bench.BenchConfig(dimensions=(100,), totals=(100.0,), half_width=2.0)
    with pytest.raises(ConfigError):
        bench.BenchConfig(model="Aitchison", initializers=("ALN",), dimensions=(9,))


# reports

@pytest.fixture(scope="module")
def dirichlet_report():
    return bench.run_dirichlet_study(bench.BenchConfig(**SMALL_DIRICHLET))


def test_report_shape(dirichlet_report):
    r = dirichlet_report
    assert len(r.records) == 3 * 4 * 4
    agg = r.aggregates()
    assert len(agg) == 16
    for a in agg:
        cell = r.cell(a["algorithm"], a["initializer"])
        conv = [c for c in cell if c.converged]
        assert a["replicates"] == len(cell) and a["converged"] == len(conv)
        if conv:
            assert a["mean_iterations"] == pytest.approx(np.mean([c.n_iter for c in conv]))


def test_converged_records_share_optimum(dirichlet_report):
    by_rep = {}
    for rec in dirichlet_report.records:
        if rec.converged:
            by_rep.setdefault(rec.replicate, []).append(rec.final_loglik)
    for lls in by_rep.values():
        assert max(lls) - min(lls) < 1e-6


def test_json_and_csv_agree(dirichlet_report):
    doc = json.loads(bench.report_to_json(dirichlet_report))
    rows = list(csv.DictReader(io.StringIO(bench.report_to_csv(dirichlet_report))))
    assert len(rows) == len(doc["records"])
    for row, rec in zip(rows, doc["records"]):
        assert row["algorithm"] == rec["algorithm"]
        assert int(row["n_iter"]) == rec["n_iter"]
        assert (row["converged"] == "True") == rec["converged"]
        assert float(row["final_loglik"]) == rec["final_loglik"]
    assert "runtime" not in doc["records"][0]
    assert "runtime" in json.loads(bench.report_to_json(dirichlet_report, True))["records"][0]


def test_reruns_are_byte_identical(dirichlet_report):
    again = bench.run_dirichlet_study(bench.BenchConfig(**SMALL_DIRICHLET))
    assert bench.report_to_json(again) == bench.report_to_json(dirichlet_report)
    assert bench.report_to_csv(again) == bench.report_to_csv(dirichlet_report)


def test_json_roundtrip(tmp_path, dirichlet_report):
    path = tmp_path / "r.json"
    bench.emit_report(dirichlet_report, "json", path)
    loaded = bench.load_report(path)
    assert bench.report_to_json(loaded) == bench.report_to_json(dirichlet_report)


def test_empty_report_has_headers_only():
    empty = bench.BenchReport(config={}, records=[])
    assert bench.report_to_csv(empty) == ",".join(bench.CSV_COLUMNS) + "\n"
    assert json.loads(bench.report_to_json(empty))["records"] == []
    assert bench.format_table(empty).count("\n") == 1


def test_aitchison_study_runs():
    rep = bench.run_aitchison_study(bench.BenchConfig(**SMALL_AITCHISON))
    assert len(rep.records) + 2 * rep.skipped == 4
    assert {r.algorithm for r in rep.records} == {"LMAdaptive", "NewtonRaphson"}
    for r in rep.records:
        if r.converged:
            assert np.isfinite(r.final_loglik)


def test_study_rejects_wrong_model():
    with pytest.raises(ConfigError):
        bench.run_aitchison_study(bench.BenchConfig(**SMALL_DIRICHLET))


# single datasets

def test_fit_dataset_lm_matches_nr(tmp_path):
    y = np.random.default_rng(70).dirichlet([3.0, 5.0, 2.0, 4.0], 60)
    path = tmp_path / "d.csv"
    np.savetxt(path, y, delimiter=",")
    rep = bench.fit_dataset(path)
    lm, nr = rep.records
    assert lm.converged and nr.converged
    assert np.allclose(lm.estimate, nr.estimate, atol=1e-6)
    assert lm.final_loglik == pytest.approx(nr.final_loglik, abs=1e-8)


# command line

def _csv(tmp_path, rows=40, seed=71):
    y = np.random.default_rng(seed).dirichlet([3.0, 5.0, 2.0], rows)
    path = tmp_path / "in.csv"
    np.savetxt(path, y, delimiter=",", header="a,b,c", comments="")
    return path


def test_cli_fit(tmp_path, capsys):
    assert main(["fit", str(_csv(tmp_path))]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [r["algorithm"] for r in doc["records"]] == ["LMAdaptive", "NewtonRaphson"]
    assert all(r["converged"] for r in doc["records"])


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["fit", str(_write(tmp_path, "1,0,1\n2,1,1\n"))]) == EXIT_DATA
    assert main(["fit", str(tmp_path / "missing.csv")]) == EXIT_DATA
    assert main(["fit", str(_csv(tmp_path)), "--initializer", "ALN"]) == EXIT_CONFIG
    cfg = _write(tmp_path, "no_such_key = 1\n", "bad.cfg")
    assert main(["simulate-dirichlet", "--config", str(cfg)]) == EXIT_CONFIG
    assert "row 1, column 2" in capsys.readouterr().err


def test_cli_zero_replacement(tmp_path, capsys):
    path = _write(tmp_path, "1,0,1\n2,1,1\n1,2,3\n3,1,2\n")
    assert main(["fit", str(path), "--zero-policy", "replace:0.01"]) == EXIT_OK


def _study_seed(args, tmp_path):
    out = tmp_path / "s.json"
    assert main(["simulate-dirichlet", *args, "--dimensions", "3", "--totals", "30",
                 "--n-replicates", "1", "--algorithms", "LMAdaptive",
                 "--initializers", "Wicker", "--out", str(out)]) == EXIT_OK
    return json.loads(out.read_text())["config"]["seed"]


def test_cli_seed_precedence(tmp_path, monkeypatch):
    assert _study_seed([], tmp_path) == 0
    monkeypatch.setenv(SEED_ENV, "11")
    assert _study_seed([], tmp_path) == 11
    cfg = _write(tmp_path, "# study\nseed = 12\nn-samples = 25\n", "s.cfg")
    assert _study_seed(["--config", str(cfg)], tmp_path) == 12
    assert _study_seed(["--config", str(cfg), "--seed", "13"], tmp_path) == 13


def test_cli_config_file_values(tmp_path):
    cfg = _write(tmp_path, "n_samples = 25\nmaxit = 50\n", "s.cfg")
    out = tmp_path / "s.json"
    assert main(["simulate-dirichlet", "--config", str(cfg), "--maxit", "60",
                 "--dimensions", "3", "--totals", "30", "--n-replicates", "1",
                 "--out", str(out)]) == EXIT_OK
    conf = json.loads(out.read_text())["config"]
    assert conf["n_samples"] == 25 and conf["maxit"] == 60


def test_cli_report_and_csv(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["simulate-dirichlet", "--dimensions", "3", "--totals", "30",
                 "--n-replicates", "2", "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert table.splitlines()[0].split()[:2] == ["algorithm", "initializer"]
    assert len(table.splitlines()) == 1 + 16
    assert main(["report", str(out), "--format", "csv"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2 * 16


def test_cli_aitchison(tmp_path, capsys):
    assert main(["simulate-aitchison", "--dimensions", "3", "--n-replicates", "1",
                 "--n-samples", "30", "--burn-in", "200", "--thin", "2",
                 "--format", "csv"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert {r["model"] for r in rows} == {"Aitchison"}
