import json
import math

import pytest

from qgeom import __version__
from qgeom.cli import main, parse_grid, CliError
from qgeom.config import ConfigError, parse_config


BUNDLED = "bifurcated8bit"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- config ----------------------------------------------------------------

def test_bundled_configs_parse():
    from importlib.resources import files

    for name in ("fullprec", "bifurcated8bit"):
        cfg = parse_config((files("qgeom") / "configs" / f"{name}.ini").read_text())
        assert cfg["train"].seed == 0
        assert cfg["net"].hidden == (32, 32)
    assert cfg["quant"].enabled and cfg["quant"].bifurcation.gl_high_bits is None


def test_config_defaults_and_coercion():
    cfg = parse_config("[quant]\nenabled = yes\nweight_bits = 4\n[bifurcation]\ngl_high_bits = 16\n")
    assert cfg["quant"].enabled is True and cfg["quant"].weight_bits == 4
    assert cfg["quant"].bifurcation.gl_high_bits == 16
    assert cfg["train"].epochs == 30


@pytest.mark.parametrize("text, needle", [
    ("[train]\nepochs = 3\nlr = fast\n", "line 3"),
    ("[train]\nepochs = 3\nlr = fast\n", "train.lr"),
    ("[net]\nhidden = 8\nwidth = 4\n", "net.width"),
    ("[dataset]\nkind = blobs\n\n[optimizer]\nlr = 1\n", "line 4"),
    ("[quant]\nenabled = maybe\n", "quant.enabled"),
    ("no section header\n", "syntax"),
])
def test_config_errors_locate_problem(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


# -- theory ----------------------------------------------------------------

@pytest.mark.parametrize("argv, expected", [
    (["binary"], "0.7978845608"),
    (["ternary", "--t", "0.6"], "0.8998627412"),
    (["nbit", "--M", "8", "--N", "6340608"], "0.9937283412"),
])
def test_theory_values(capsys, argv, expected):
    code, out, err = run(capsys, "theory", *argv)
    assert code == 0
    assert out.strip() == expected


def test_theory_json(capsys, tmp_path):
    code, out, _ = run(capsys, "theory", "binary", "--json", tmp_path / "b.json")
    assert code == 0
    doc = json.loads((tmp_path / "b.json").read_text())
    assert math.isclose(doc["value"], math.sqrt(2 / math.pi), rel_tol=1e-15)
    assert (tmp_path / "b.json.manifest.json").is_file()


def test_theory_unknown_formula_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["theory", "no_such_formula"])
    assert exc.value.code == 2


def test_theory_missing_parameter_exit_2(capsys):
    code, out, err = run(capsys, "theory", "nbit", "--M", 8)
    assert code == 2 and out == "" and "'N'" in err


# -- sweep -----------------------------------------------------------------

def test_parse_grid_forms():
    assert parse_grid("0:1.2:0.05")[-1] == pytest.approx(1.2)
    assert len(parse_grid("0:1.2:0.05")) == 25
    assert parse_grid("1:8", integer=True) == list(range(1, 9))
    assert parse_grid("0.1,0.5,0.9") == [0.1, 0.5, 0.9]
    for bad in ("1:0:0.1", "a:b", "", "0:1:0"):
        with pytest.raises(CliError) as exc:
            parse_grid(bad)
        assert exc.value.code == 2


def test_sweep_threshold_csv_and_rerun(capsys, tmp_path):
    args = ["sweep", "threshold", "--grid", "0:1.2:0.05", "--n", 2000, "--trials", 10, "--seed", 7]
    assert run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.csv", "--jobs", 3)[0] == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = a.decode().split("\n")
    assert lines[0] == "param,emp_cos,se,theory_cos,emp_angle,theory_angle"
    assert len([ln for ln in lines[1:] if ln]) == 25
    assert b"\r" not in a
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["master_seed"] == 7 and man["version"] == __version__
    assert man["command"] == "sweep"
    assert "timestamp" in man


def test_sweep_bits_row8(capsys, tmp_path):
    code, *_ = run(capsys, "sweep", "bits", "--grid", "1:8", "--n", 10_000, "--trials", 20,
                   "--seed", 7, "--out", tmp_path / "b.csv")
    assert code == 0
    rows = (tmp_path / "b.csv").read_text().splitlines()[1:]
    assert len(rows) == 8
    last = rows[-1].split(",")
    assert float(last[0]) == 8 and float(last[1]) >= 0.992


def test_sweep_invalid_grid_exit_2(capsys, tmp_path):
    code, out, err = run(capsys, "sweep", "threshold", "--grid", "1:0", "--seed", 1,
                         "--out", tmp_path / "x.csv")
    assert code == 2 and "grid" in err
    assert not (tmp_path / "x.csv").exists()


def test_sweep_unwritable_exit_3(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, out, err = run(capsys, "sweep", "threshold", "--grid", "0.6", "--n", 100, "--trials", 2,
                         "--seed", 1, "--out", blocker / "x.csv")
    assert code == 3 and "cannot write" in err


def test_sweep_random_seed_reported(capsys, tmp_path):
    code, out, err = run(capsys, "sweep", "threshold", "--grid", "0.6", "--n", 100, "--trials", 2,
                         "--out", tmp_path / "r.csv")
    assert code == 0
    seed = json.loads((tmp_path / "r.csv.manifest.json").read_text())["master_seed"]
    assert str(seed) in err
    rerun = tmp_path / "r2.csv"
    run(capsys, "sweep", "threshold", "--grid", "0.6", "--n", 100, "--trials", 2, "--seed", seed,
        "--out", rerun)
    assert rerun.read_bytes() == (tmp_path / "r.csv").read_bytes()


def test_output_dir_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("QGEOM_OUTPUT_DIR", str(tmp_path / "base"))
    code, *_ = run(capsys, "sweep", "threshold", "--grid", "0.6", "--n", 100, "--trials", 2,
                   "--seed", 3, "--out", "rel.csv")
    assert code == 0
    assert (tmp_path / "base" / "rel.csv").is_file()
    assert (tmp_path / "base" / "rel.csv.manifest.json").is_file()


# -- rangebn ---------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 256])
def test_rangebn_passes(capsys, n):
    code, out, err = run(capsys, "rangebn", "--n", n, "--batches", 2000, "--seed", 5)
    assert code == 0
    report = json.loads(out)
    assert report["passed"] is True
    assert 0.325 <= report["mean_ratio"] <= 2.0


def test_rangebn_writes_report(capsys, tmp_path):
    code, out, _ = run(capsys, "rangebn", "--n", 32, "--batches", 200, "--seed", 5,
                       "--out", tmp_path / "rb.json")
    assert code == 0
    assert json.loads((tmp_path / "rb.json").read_text()) == json.loads(out)
    assert (tmp_path / "rb.json.manifest.json").is_file()


def test_rangebn_bad_flags_exit_2(capsys):
    assert run(capsys, "rangebn", "--n", 1, "--seed", 1)[0] == 2


# -- train -----------------------------------------------------------------

@pytest.fixture(scope="module")
def train_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("train")
    runs = {}
    for label, extra in [("bif", []), ("bif_again", []), ("nobif", ["--no-bifurcation"])]:
        out = base / label
        code = main(["train", BUNDLED, "--out-dir", str(out), *extra])
        runs[label] = (code, out)
    return runs


def test_train_bundled_writes_artifacts(train_runs):
    code, out = train_runs["bif"]
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["final_accuracy"] <= 1.0
    assert (out / "histograms.csv").is_file()
    for name in ("report.json", "histograms.csv"):
        man = json.loads((out / f"{name}.manifest.json").read_text())
        assert man["command"] == "train" and man["master_seed"] == 0


def test_train_rerun_byte_identical(train_runs):
    a, b = train_runs["bif"][1], train_runs["bif_again"][1]
    for name in ("report.json", "histograms.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_train_no_bifurcation_lowers_backward_cosine(train_runs):
    def mean_cos(out):
        return json.loads((out / "report.json").read_text())["angle_trace"]["mean"]["grad_weight"]

    assert train_runs["nobif"][0] == 0
    assert mean_cos(train_runs["nobif"][1]) < mean_cos(train_runs["bif"][1])


def test_train_malformed_config_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepochs = 2\nbatch_size = lots\n")
    code, out, err = run(capsys, "train", bad, "--out-dir", tmp_path / "o")
    assert code == 2
    assert "line 3" in err and "train.batch_size" in err
    assert out == ""


def test_train_missing_config_exit_2(capsys, tmp_path):
    assert run(capsys, "train", tmp_path / "nope.ini")[0] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_nan_abort_exit_4(capsys, tmp_path):
    cfg = tmp_path / "hot.ini"
    cfg.write_text("[train]\nepochs = 3\nlr = 1e30\nmomentum = 0.9\n[net]\nnorm = none\n")
    code, out, err = run(capsys, "train", cfg, "--out-dir", tmp_path / "o")
    assert code == 4
    assert not (tmp_path / "o" / "report.json").exists()


def test_readme_config_example_parses():
    from pathlib import Path
    import re

    readme = (Path(__file__).resolve().parent.parent / "README.md").read_text()
    block = re.search(r"```ini\n(.*?)```", readme, re.S).group(1)
    cfg = parse_config(block)
    assert cfg["net"].hidden == (32, 32) and cfg["net"].norm == "range"
    assert cfg["quant"].act_chunks == 4 and cfg["quant"].bifurcation.gl_high_bits is None
    assert cfg["train"].hist_bins == 40 and cfg["dataset"].radius == 3.0
