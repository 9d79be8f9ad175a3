import csv
import io
import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from neutralgen.block_count import mrca_time_pmf
from neutralgen.cli import build_parser, main, output_path, render
from neutralgen.neutral_model import MutationKernel, exact_stationary

TWO = "9/10 1/10\n2/10 8/10\n"


@pytest.fixture
def files(tmp_path, monkeypatch):
    monkeypatch.delenv("NEUTRALGEN_OUTPUT_DIR", raising=False)
    k = tmp_path / "kernel.txt"
    k.write_text("# two-type kernel\n" + TWO)
    eta = tmp_path / "eta.txt"
    eta.write_text("1 0\n")
    return tmp_path, str(k), str(eta)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# -- usage ---------------------------------------------------------------------


def test_help_and_usage_errors(capsys):
    assert main(["--help"]) == 0
    assert main(["tail-check", "--help"]) == 0
    assert main([]) == 2
    assert main(["tail-check", "--n-list", "2", "--bogus"]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["tail-check", "--n-list", "3..1"]) == 2
    capsys.readouterr()


@pytest.mark.parametrize(
    "argv",
    [
        ["mrca-sim", "--n", "3", "--runs", "10"],
        ["limit-law", "--n", "5", "--runs", "10", "--samples", "10"],
        ["simulate", "--kernel", "K", "--n", "2"],
    ],
)
def test_seed_is_mandatory(argv, files, capsys):
    _, k, _ = files
    argv = [k if a == "K" else a for a in argv]
    code, _, err = run(argv, capsys)
    assert code == 2 and "--seed" in err


def test_every_subcommand_has_help():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {
        "mrca-sim", "absorption", "tail-check", "limit-law", "simulate", "flow", "invariant", "decay", "lyapunov",
    }


def test_input_errors_exit_two(files, capsys):
    tmp, k, _ = files
    bad = tmp / "bad.txt"
    bad.write_text("1/2 1/3\n1/2 1/2\n")
    assert run(["flow", "--kernel", str(bad), "--n", "2"], capsys)[0] == 2
    assert run(["flow", "--kernel", str(tmp / "missing.txt"), "--n", "2"], capsys)[0] == 2
    assert run(["flow", "--n", "2"], capsys)[0] == 2


# -- output ------------------------------------------------------------------------


def test_render_formats():
    recs = [{"a": F(1, 3), "b": 2.5, "c": None}, {"a": F(2), "b": float("inf"), "c": True}]
    doc = json.loads(render("x", {"p": 1}, {"s": F(5, 7)}, recs, "json"))
    assert doc["schema_version"] == 1 and doc["command"] == "x"
    assert doc["records"][0]["a"] == "1/3" and doc["records"][1]["a"] == "2"
    assert doc["records"][1]["b"] == "inf" and doc["summary"]["s"] == "5/7"
    rows = list(csv.DictReader(io.StringIO(render("x", {}, {}, recs, "csv"))))
    assert rows[0] == {"a": "1/3", "b": "2.5", "c": ""}
    assert render("x", {}, {}, [], "csv") == ""


def test_output_path_rules(tmp_path, monkeypatch):
    monkeypatch.delenv("NEUTRALGEN_OUTPUT_DIR", raising=False)
    assert output_path(None, "flow", "json") is None
    assert output_path("a/b.csv", "flow", "csv") == type(tmp_path)("a/b.csv")
    monkeypatch.setenv("NEUTRALGEN_OUTPUT_DIR", str(tmp_path))
    assert output_path(None, "flow", "json") == tmp_path / "flow.json"
    assert output_path("b.csv", "flow", "csv") == tmp_path / "b.csv"
    assert output_path(str(tmp_path / "abs.csv"), "flow", "csv") == tmp_path / "abs.csv"


def test_output_dir_env(files, capsys, monkeypatch):
    tmp, _, _ = files
    monkeypatch.setenv("NEUTRALGEN_OUTPUT_DIR", str(tmp / "out"))
    code, out, _ = run(["absorption", "--n", "3", "--eps", "1e-3"], capsys)
    assert code == 0 and out == ""
    assert json.loads((tmp / "out" / "absorption.json").read_text())["command"] == "absorption"


# -- subcommands ---------------------------------------------------------------------


def test_tail_check(capsys):
    code, out, _ = run(["tail-check", "--n-list", "2,5,10", "--eps", "1e-12"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["violations"] == []
    twos = [r for r in doc["records"] if r["N"] == 2]
    assert [r["tail_T"] for r in twos] == [2.0**-n for n in range(40)]


def test_absorption_exact(capsys):
    code, out, _ = run(["absorption", "--n", "2", "--exact", "--eps", "1e-3", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    # S^(2,2) is geometric on {1, 2, ...} with parameter 1/2
    assert [r["pmf"] for r in rows[:4]] == ["0", "1/2", "1/4", "1/8"]
    assert [r["survival"] for r in rows[:3]] == ["1", "1", "1/2"]


def test_mrca_sim(capsys):
    code, out, _ = run(["mrca-sim", "--n", "3", "--runs", "3000", "--seed", "5"], capsys)
    assert code == 0
    doc = json.loads(out)
    recs = doc["records"]
    exact = mrca_time_pmf(3, len(recs) - 1)[0]
    assert [r["exact"] for r in recs] == [float(p) for p in exact]
    assert sum(r["count"] for r in recs) == 3000
    assert doc["summary"]["label_chi2_pvalue"] > 1e-3


def test_flow_and_invariant(files, capsys):
    _, k, eta = files
    code, out, _ = run(["flow", "--kernel", k, "--eta", eta, "--n", "2", "--steps", "1", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["gamma_hat"] for r in rows if r["step"] == "1"] == ["171/200", "9/200", "9/200", "11/200"]

    code, out, _ = run(["invariant", "--kernel", k, "--n", "2", "--eps", "1e-8"], capsys)
    assert code == 0
    doc = json.loads(out)
    probs = [F(r["probability"]) for r in doc["records"]]
    assert sum(probs) == 1
    radius = F(doc["summary"]["radius"])
    target = exact_stationary(MutationKernel.from_file(k).with_stationary(), 2).weights
    assert sum(abs(p - q) for p, q in zip(probs, target)) <= radius + F(1, 10**12)
    assert radius < F(1, 10**8)


def test_decay_and_lyapunov(files, capsys):
    _, k, eta = files
    code, out, _ = run(["decay", "--kernel", k, "--eta", eta, "--n", "2", "--horizons", "0..40"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["violations"] == []
    assert 0 < doc["summary"]["min_kprime"] < doc["params"]["kprime"]
    assert len(doc["records"]) == 41
    code, out, _ = run(["lyapunov", "--kernel", k, "--n", "3", "--horizons", "0..40"], capsys)
    assert code == 0 and json.loads(out)["summary"]["ok"] is True


def test_bound_failures_exit_one(files, capsys):
    _, k, _ = files
    code, _, err = run(["decay", "--kernel", k, "--n", "2", "--horizons", "0..5", "--delta", "0", "--lam", "5"], capsys)
    assert code == 1 and "violated" in err
    code, _, err = run(["lyapunov", "--kernel", k, "--n", "2", "--delta", "2", "--lam", "50"], capsys)
    assert code == 1 and "below" in err


def test_config_file_with_cli_precedence(files, capsys):
    tmp, k, _ = files
    cfg = tmp / "run.cfg"
    cfg.write_text(f"kernel = {k}\nn_particles = 3\nhorizons = 0..4\nseed = 9\noutput_format = csv\n")
    code, out, _ = run(["decay", "--config", str(cfg)], capsys)
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(out)))) == 5
    code, out, _ = run(["decay", "--config", str(cfg), "--horizons", "0..2", "--format", "json"], capsys)
    doc = json.loads(out)
    assert doc["params"]["n"] == 3 and len(doc["records"]) == 3
    # seed taken from the config file
    code, out, _ = run(["simulate", "--config", str(cfg), "--runs", "50", "--steps", "2"], capsys)
    assert code == 0


def test_simulate_agrees_with_exact(files, capsys):
    _, k, eta = files
    argv = ["simulate", "--kernel", k, "--eta", eta, "--n", "2", "--steps", "3", "--runs", "20000", "--seed", "3"]
    code, out, _ = run(argv, capsys)
    doc = json.loads(out)
    assert code == 0 and sum(r["count"] for r in doc["records"]) == 20000
    # four cells, 20000 runs: the L1 error is a few times 1/sqrt(runs)
    assert doc["summary"]["tv_to_exact"] < 0.03


# -- determinism ----------------------------------------------------------------------


STOCHASTIC_RUNS = [
    ["mrca-sim", "--n", "4", "--runs", "500"],
    ["limit-law", "--n", "20", "--runs", "500", "--samples", "500", "--alpha-grid", "0.5"],
    ["simulate", "--kernel", "K", "--eta", "E", "--n", "2", "--steps", "4", "--runs", "300"],
]


@pytest.mark.parametrize("argv", STOCHASTIC_RUNS)
@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_same_seed_byte_identical(argv, fmt, files):
    tmp, k, eta = files
    argv = [k if a == "K" else eta if a == "E" else a for a in argv]
    paths = []
    for rep, seed in enumerate(["17", "17", "18"]):
        p = tmp / f"{argv[0]}-{fmt}-{rep}.out"
        assert main(argv + ["--seed", seed, "--format", fmt, "--out", str(p)]) == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]
    assert paths[0] != paths[2]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "neutralgen.cli", "tail-check", "--n-list", "2", "--format", "csv"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert res.returncode == 0 and res.stdout.startswith("N,n,tail_T")
