import csv
import json

import jsonschema
import numpy as np
import pytest

from evoap import cli
from evoap.dataseries import save_csv
from evoap.metrics import rand_series
from evoap.results import load_result, validate_result

from conftest import make_series


@pytest.fixture(scope="module")
def blobs_csv(tmp_path_factory):
    rng = np.random.default_rng(0)
    T, n = 4, 16
    centre = np.repeat([[0.0, 0.0], [6.0, 0.0]], n // 2, axis=0)
    x = centre[None] + rng.normal(0, 0.5, (T, n, 2))
    labels = np.tile(np.repeat([0, 1], n // 2), (T, 1))
    path = tmp_path_factory.mktemp("data") / "blobs.csv"
    save_csv(make_series(x, labels=labels), path)
    return path


def run(*argv):
    return cli.main(["run", *map(str, argv)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_all_outputs(blobs_csv, tmp_path, capsys):
    code = run("--algo", "eap", "--csv", blobs_csv, "--out", tmp_path, "--emit-plot-data")
    assert code == 0
    assert "tracks=2 (2.00)" in capsys.readouterr().out
    stem = "eap-blobs"
    for suffix in (".json", "-assignments.csv", "-metrics.csv", "-plotdata.csv",
                   "-rand.png", "-clusters.png", "-tracks.png"):
        assert (tmp_path / f"{stem}{suffix}").stat().st_size > 0
    doc = load_result(tmp_path / f"{stem}.json")
    assert doc["schema_version"] == "1.0"
    assert len(doc["tracks"]) == 2 and doc["metrics"]["rand_mean"] == 1.0
    assert len(read_csv(tmp_path / f"{stem}-assignments.csv")) == 4 * 16


def test_plot_data_matches_metrics(blobs_csv, tmp_path):
    assert run("--algo", "ap", "--csv", blobs_csv, "--out", tmp_path, "--emit-plot-data", "--no-plots") == 0
    rows = read_csv(tmp_path / "ap-blobs-plotdata.csv")
    assert [int(r["t"]) for r in rows] == [1, 2, 3, 4]
    values = np.array([float(r["rand"]) for r in rows])
    assert np.all((values >= 0) & (values <= 1))
    # recompute from the saved assignments
    ds = cli.load_dataset(cli.make_config(
        cli.build_parser().parse_args(["run", "--csv", str(blobs_csv)]), "ap"))
    sol, _, _ = cli.execute(cli.make_config(
        cli.build_parser().parse_args(["run", "--csv", str(blobs_csv)]), "ap"), ds)
    assert np.allclose(values, rand_series(ds.labels, ds.labeled, sol))
    assert not list(tmp_path.glob("*.png"))


def test_same_config_gives_identical_json(blobs_csv, tmp_path):
    args = cli.build_parser().parse_args(["run", "--csv", str(blobs_csv), "--out", str(tmp_path)])
    cfg = cli.make_config(args, "eap")
    _, _, a = cli.execute(cfg, timestamp="2000-01-01T00:00:00+00:00")
    _, _, b = cli.execute(cfg, timestamp="2000-01-01T00:00:00+00:00")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    _, _, c = cli.execute(cfg, timestamp="2011-11-11T11:11:11+00:00")
    assert c["determinism_hash"] == a["determinism_hash"]


def test_schema_rejects_tampering(blobs_csv, tmp_path):
    assert run("--csv", blobs_csv, "--out", tmp_path, "--no-plots") == 0
    doc = json.loads((tmp_path / "eap-blobs.json").read_text())
    validate_result(doc)
    broken = json.loads(json.dumps(doc))
    broken["assignments"][0]["p0"]["track"] = "nope"
    with pytest.raises(jsonschema.ValidationError):
        validate_result(broken)
    broken = json.loads(json.dumps(doc))
    broken["iterations"] += 1
    with pytest.raises(jsonschema.ValidationError, match="determinism_hash"):
        validate_result(broken)
    del doc["schema_version"]
    with pytest.raises(jsonschema.ValidationError):
        validate_result(doc)


def test_non_convergence_exit_code(blobs_csv, tmp_path):
    assert run("--csv", blobs_csv, "--out", tmp_path, "--max-iter", 30, "--no-plots") == 2
    assert load_result(tmp_path / "eap-blobs.json")["converged"] is False


@pytest.mark.parametrize(
    "argv",
    [
        ["--gamma", 1, "--omega", 2],
        ["--preference", "median"],
        ["--lambda", 1.5],
        [],  # no dataset
    ],
)
def test_config_errors_exit_1(blobs_csv, tmp_path, argv, capsys):
    src = [] if not argv else ["--csv", blobs_csv]
    assert run(*src, "--out", tmp_path, *argv) == 1
    assert "error" in capsys.readouterr().err


def test_both_sources_is_an_error(blobs_csv, tmp_path):
    assert run("--csv", blobs_csv, "--synthetic", "separated", "--out", tmp_path) == 1


def test_missing_file_exit_1(tmp_path):
    assert run("--csv", tmp_path / "absent.csv", "--out", tmp_path) == 1


def test_environment_override(blobs_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("EVOAP_GAMMA", "3.5")
    args = cli.build_parser().parse_args(["run", "--csv", str(blobs_csv)])
    assert args.gamma == 3.5
    args = cli.build_parser().parse_args(["run", "--csv", str(blobs_csv), "--gamma", "1"])
    assert args.gamma == 1.0


def test_nocn_forces_omega_zero(blobs_csv):
    args = cli.build_parser().parse_args(["run", "--csv", str(blobs_csv), "--omega", "0.7"])
    cfg = cli.make_config(args, "eap-nocn")
    assert cfg.eap.omega == 0.0 and not cfg.eap.consensus


def test_compare_from_saved_results(blobs_csv, tmp_path, capsys):
    for algo in ("ap", "eap", "eap-nocn"):
        assert run("--algo", algo, "--csv", blobs_csv, "--out", tmp_path, "--no-plots") == 0
    files = sorted(tmp_path.glob("*.json"))
    out = tmp_path / "cmp"
    code = cli.main(["compare", "--results", *map(str, files), "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "compare.csv")
    assert [r["algorithm"] for r in rows] == ["ap", "eap", "eap-nocn"]
    assert all(float(r["rand_mean"]) == 1.0 for r in rows)
    first = (out / "compare.csv").read_text()
    cli.main(["compare", "--results", *map(str, files), "--out", str(out)])
    assert (out / "compare.csv").read_text() == first
    # a single result still gives a table
    assert cli.main(["compare", "--results", str(files[0]), "--out", str(out)]) == 0
    assert len(read_csv(out / "compare.csv")) == 1


def test_compare_refuses_mixed_datasets(blobs_csv, tmp_path):
    other = tmp_path / "other.csv"
    text = blobs_csv.read_text().splitlines()
    # nudge one feature value so the content differs
    head, first, rest = text[0], text[1].split(","), text[2:]
    first[2] = str(float(first[2]) + 1.0)
    other.write_text("\n".join([head, ",".join(first), *rest]) + "\n")
    assert run("--csv", blobs_csv, "--out", tmp_path / "a", "--no-plots") == 0
    assert run("--csv", other, "--out", tmp_path / "b", "--no-plots") == 0
    files = [tmp_path / "a" / "eap-blobs.json", tmp_path / "b" / "eap-other.json"]
    assert cli.main(["compare", "--results", *map(str, files), "--out", str(tmp_path)]) == 1


def test_generate_subcommand(tmp_path):
    path = tmp_path / "sep.csv"
    assert cli.main(["generate", "--synthetic", "separated", "--seed", "1", "--out", str(path)]) == 0
    rows = read_csv(path)
    assert len(rows) == 200 * 40


@pytest.mark.slow
def test_synthetic_separated_runs(tmp_path, capsys):
    assert run("--algo", "eap", "--synthetic", "separated", "--seed", 7, "--gamma", 2,
               "--omega", 1, "--lambda", 0.9, "--out", tmp_path, "--emit-plot-data") == 0
    doc = load_result(tmp_path / "eap-separated-s7.json")
    assert doc["dataset"] == {**doc["dataset"], "source": "synthetic", "seed": 7}
    assert run("--algo", "ap", "--synthetic", "separated", "--seed", 7, "--out", tmp_path,
               "--no-plots") == 0
    ap = load_result(tmp_path / "ap-separated-s7.json")
    assert ap["metrics"]["distinct_exemplars"] > 20
    rows = read_csv(tmp_path / "eap-separated-s7-plotdata.csv")
    assert len(rows) == 40
