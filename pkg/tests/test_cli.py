import json
import subprocess
import sys

import pytest

from probchain import cli
from probchain.output import read_csv

SMALL = {
    "errprop": ["--n", "1,4", "--samples", "300", "--repetitions", "2", "--amp-count", "3"],
    "cpoiss": ["--lambdas", "5,9", "--samples", "4000"],
    "treeclass": ["--depths", "2,3", "--breadths", "2,3", "--eps", "0.01,0.32", "--models", "3",
                  "--trials", "20"],
    "hmmflat": ["--sequences", "200", "--length", "6"],
}


def outputs(tmp, sub):
    return sorted(p for p in tmp.iterdir() if p.name.startswith(sub + "-"))


def main_csv(tmp, sub):
    hits = [p for p in outputs(tmp, sub) if p.suffix == ".csv" and "-lambda" not in p.name]
    assert len(hits) == 1
    return hits[0]


def test_defaults_resolve_to_desk():
    cfg = cli.parse_args(["cpoiss"])
    assert cfg.preset == "desk" and cfg.seed == cli.DEFAULT_SEED and cfg.jobs == 1
    assert cfg.params["samples"] == 62_500
    assert cli.parse_args(["cpoiss", "--preset", "paper"]).params["samples"] == 1_000_000


WORK = {
    "errprop": lambda p: p["samples"] * p["repetitions"],
    "cpoiss": lambda p: p["samples"],
    "treeclass": lambda p: p["models"] * p["trials"],
    "lexnn": lambda p: p["sample"] * p["repeats"],
    "hmmflat": lambda p: p["sequences"],
}


@pytest.mark.parametrize("sub", cli.SUBCOMMANDS)
def test_desk_preset_is_at_least_16x_smaller(sub):
    work = WORK[sub]
    assert work(cli.PRESETS[sub]["paper"]) >= 16 * work(cli.PRESETS[sub]["desk"])


def test_precedence_flag_over_config_over_preset(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# test\nsamples = 1234\npmax=0.5\nseed=7\n", encoding="utf-8")
    cfg = cli.parse_args(["cpoiss", "--config", str(conf), "--samples", "99"])
    assert cfg.params["samples"] == 99
    assert cfg.params["pmax"] == 0.5
    assert cfg.params["pmin"] == 0.0
    assert cfg.seed == 7


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "x"))
    assert cli.parse_args(["hmmflat"]).out_dir == tmp_path / "x"
    assert cli.parse_args(["hmmflat", "--out", str(tmp_path)]).out_dir == tmp_path


def test_time_seed():
    cfg = cli.parse_args(["hmmflat", "--time-seed"])
    assert cfg.seed_source == "time-microseconds" and 0 <= cfg.seed < 1_000_000


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nosuch"],
        ["cpoiss", "--samples", "0"],
        ["cpoiss", "--seed", "-1"],
        ["errprop", "--noise", "cauchy"],
        ["lexnn"],
        ["hmmflat", "--seed", "3", "--time-seed"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2


def test_bad_config_key_exits_2(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("nonsense=1\n", encoding="utf-8")
    with pytest.raises(SystemExit) as exc:
        cli.parse_args(["cpoiss", "--config", str(conf)])
    assert exc.value.code == 2


def test_experiment_failure_exits_1(tmp_path, capsys):
    code = cli.main(["lexnn", "--lexicon", str(tmp_path / "missing.txt"), "--out", str(tmp_path)])
    assert code == 1
    assert "missing.txt" in capsys.readouterr().err
    bad = tmp_path / "bad.hmm"
    bad.write_text("2 2\n1 1\n", encoding="utf-8")
    assert cli.main(["hmmflat", "--models", str(bad), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_run_writes_csv_and_manifest(sub, tmp_path):
    assert cli.main([sub, *SMALL[sub], "--out", str(tmp_path), "--seed", "5"]) == 0
    csv_path = main_csv(tmp_path, sub)
    assert csv_path.name.startswith(f"{sub}-5-")
    manifest = json.loads(csv_path.with_suffix(".manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["preset"] == "desk"
    assert manifest["rerun"].startswith(f"probchain {sub} --preset desk --seed 5")
    header, rows = read_csv(csv_path)
    expected = {
        "errprop": cli.CHAIN_CSV_HEADER,
        "cpoiss": cli.CPOISS_CSV_HEADER,
        "treeclass": cli.TREE_CSV_HEADER,
        "hmmflat": cli.HMM_CSV_HEADER,
    }[sub]
    assert tuple(header) == expected and rows


def test_errprop_table_mode(tmp_path):
    argv = ["errprop", "--table", "--truncated", "--samples", "100", "--repetitions", "2", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    txt = [p for p in outputs(tmp_path, "errprop") if p.suffix == ".txt"][0]
    assert len([ln for ln in txt.read_text().splitlines() if ln.strip()]) == 32
    _, rows = read_csv(main_csv(tmp_path, "errprop"))
    assert len(rows) == 31 * 20 and rows[0][1] is True


def test_lexnn_run(tmp_path):
    words = tmp_path / "tiny.txt"
    words.write_text("\n".join(f"w{i}x{j}" for i in range(30) for j in range(30)), encoding="utf-8")
    assert cli.main(["lexnn", "--lexicon", str(words), "--sample", "200", "--repeats", "2",
                     "--out", str(tmp_path)]) == 0
    header, rows = read_csv(main_csv(tmp_path, "lexnn"))
    assert rows[0][0] == "tiny" and rows[0][1] == 900


def test_rerun_command_reproduces(tmp_path):
    argv = ["hmmflat", *SMALL["hmmflat"], "--seed", "11", "--out", str(tmp_path / "a")]
    assert cli.main(argv) == 0
    first = main_csv(tmp_path / "a", "hmmflat")
    rerun = json.loads(first.with_suffix(".manifest.json").read_text())["rerun"].split()[1:]
    assert cli.main(rerun + ["--out", str(tmp_path / "b")]) == 0
    assert first.read_bytes() == main_csv(tmp_path / "b", "hmmflat").read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "probchain", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "probchain" in res.stdout
