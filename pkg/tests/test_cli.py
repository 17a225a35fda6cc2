"""End-to-end command-line tests: subcommand behavior, artifact layout,
exit-code mapping, seed resolution, and report schema conformance."""

import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from parrot import cli
from parrot import data as datamod
from parrot import fusion

SCHEMA = json.loads(
    (Path(__file__).resolve().parent.parent / "docs" / "report.schema.json")
    .read_text()
)


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture()
def synth_files(tmp_path):
    a = tmp_path / "a.pfv"
    b = tmp_path / "b.pfv"
    code = run("synth", "--out-a", str(a), "--out-b", str(b),
               "--classes", "4", "--per-class", "10",
               "--dim-a", "72", "--dim-b", "72", "--seed", "3")
    assert code == 0
    return a, b


class TestSynth:
    def test_writes_loadable_tables(self, synth_files):
        a, b = synth_files
        ta = datamod.load_pfv(a)
        tb = datamod.load_pfv(b)
        assert len(ta) == len(tb) == 40
        assert ta.label_names == [f"class_{i}" for i in range(4)]

    def test_seed_changes_content(self, tmp_path):
        outs = []
        for seed in ("1", "2"):
            a = tmp_path / f"a{seed}.pfv"
            b = tmp_path / f"b{seed}.pfv"
            assert run("synth", "--out-a", str(a), "--out-b", str(b),
                       "--per-class", "5", "--seed", seed) == 0
            outs.append(a.read_text())
        assert outs[0] != outs[1]

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        flag = tmp_path / "flag.pfv"
        flag_b = tmp_path / "flagb.pfv"
        env = tmp_path / "env.pfv"
        env_b = tmp_path / "envb.pfv"
        assert run("synth", "--out-a", str(flag), "--out-b", str(flag_b),
                   "--per-class", "5", "--seed", "42") == 0
        monkeypatch.setenv("PARROT_SEED", "42")
        assert run("synth", "--out-a", str(env), "--out-b", str(env_b),
                   "--per-class", "5") == 0
        assert flag.read_text() == env.read_text()

    def test_bad_env_seed_is_usage_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PARROT_SEED", "many")
        assert run("synth", "--out-a", str(tmp_path / "x.pfv"),
                   "--out-b", str(tmp_path / "y.pfv")) == 2

    def test_too_small_dims_is_data_error(self, tmp_path):
        assert run("synth", "--out-a", str(tmp_path / "x.pfv"),
                   "--out-b", str(tmp_path / "y.pfv"),
                   "--dim-a", "20", "--dim-b", "20") == 3


CV_FLAGS = ["--epochs", "2", "--folds", "2", "--batch", "16", "--seed", "7"]


@pytest.fixture()
def cv_run(synth_files, tmp_path):
    a, b = synth_files
    out = tmp_path / "run"
    code = run("cv", "--ptm-a", str(a), "--ptm-b", str(b),
               "--out", str(out), *CV_FLAGS)
    assert code == 0
    return a, b, out


class TestCv:
    def test_artifacts_and_schema(self, cv_run):
        _, _, out = cv_run
        report = json.loads((out / "report.json").read_text())
        jsonschema.validate(report, SCHEMA)
        assert report["config"]["seed"] == 7
        assert len(report["folds"]) == 2
        assert (out / "confusion.csv").exists()
        assert (out / "folds.csv").exists()
        for fold in (0, 1):
            model, extra = fusion.load_checkpoint(out / f"fold_{fold}.ckpt")
            assert extra["fold_index"] == fold
            assert extra["label_names"] == report["data"]["label_names"]

    def test_stdout_uses_two_decimal_percents(self, synth_files, tmp_path, capsys):
        a, b = synth_files
        out = tmp_path / "pct"
        assert run("cv", "--ptm-a", str(a), "--ptm-b", str(b),
                   "--out", str(out), *CV_FLAGS) == 0
        captured = capsys.readouterr().out
        assert "aggregate: accuracy " in captured
        import re
        assert re.search(r"accuracy \d{1,3}\.\d{2}%", captured)

    def test_repeat_run_byte_identical_report(self, synth_files, tmp_path):
        a, b = synth_files
        out1 = tmp_path / "r1"
        out2 = tmp_path / "r2"
        for out in (out1, out2):
            assert run("cv", "--ptm-a", str(a), "--ptm-b", str(b),
                       "--out", str(out), *CV_FLAGS) == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_concat_fusion_flag(self, synth_files, tmp_path):
        a, b = synth_files
        out = tmp_path / "cc"
        assert run("cv", "--ptm-a", str(a), "--ptm-b", str(b), "--out", str(out),
                   "--fusion", "concat", *CV_FLAGS) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["fusion_kind"] == "concat"
        model, _ = fusion.load_checkpoint(out / "fold_0.ckpt")
        assert isinstance(model, fusion.ConcatBaselineModel)

    def test_missing_file_is_data_error(self, tmp_path):
        assert run("cv", "--ptm-a", str(tmp_path / "no.pfv"),
                   "--ptm-b", str(tmp_path / "no2.pfv"),
                   "--out", str(tmp_path / "o"), *CV_FLAGS) == 3

    def test_malformed_pfv_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.pfv"
        bad.write_text("#PFV1,ptm=m,dim=2,labels=a;b\nu0,a,1.0\n")
        assert run("cv", "--ptm-a", str(bad), "--ptm-b", str(bad),
                   "--out", str(tmp_path / "o"), *CV_FLAGS) == 3

    def test_bad_epochs_is_usage_error(self, synth_files, tmp_path):
        a, b = synth_files
        assert run("cv", "--ptm-a", str(a), "--ptm-b", str(b),
                   "--out", str(tmp_path / "o"), "--epochs", "0",
                   "--folds", "2") == 2


class TestEval:
    def test_eval_checkpoint(self, cv_run, tmp_path, capsys):
        a, b, out = cv_run
        preds = tmp_path / "preds.csv"
        pen = tmp_path / "pen.pfv"
        code = run("eval", "--checkpoint", str(out / "fold_0.ckpt"),
                   "--ptm-a", str(a), "--ptm-b", str(b),
                   "--out", str(preds), "--export-penultimate", str(pen))
        assert code == 0
        captured = capsys.readouterr().out
        assert "accuracy" in captured and "%" in captured

        lines = preds.read_text().strip().split("\n")
        assert lines[0] == "utterance_id,true_label,predicted_label"
        assert len(lines) == 41

        pen_table = datamod.load_pfv(pen)
        assert pen_table.dim == 128
        assert len(pen_table) == 40
        assert pen_table.ptm_name == "penultimate-parrot"
        # exported labels match the input tables
        src = datamod.load_pfv(a)
        assert pen_table.ids == src.ids
        np.testing.assert_array_equal(pen_table.labels, src.labels)

    def test_label_vocabulary_mismatch(self, cv_run, tmp_path):
        a, _, out = cv_run
        other = tmp_path / "othervocab.pfv"
        text = a.read_text().replace("labels=class_0;class_1;class_2;class_3",
                                     "labels=w;x;y;z")
        for c in range(4):
            text = text.replace(f",class_{c},", f",{'wxyz'[c]},")
        other.write_text(text)
        assert run("eval", "--checkpoint", str(out / "fold_0.ckpt"),
                   "--ptm-a", str(other), "--ptm-b", str(other)) == 3

    def test_bad_checkpoint(self, synth_files, tmp_path):
        a, b = synth_files
        junk = tmp_path / "junk.ckpt"
        junk.write_bytes(b"not a checkpoint")
        assert run("eval", "--checkpoint", str(junk),
                   "--ptm-a", str(a), "--ptm-b", str(b)) == 3


class TestSinkhornCommand:
    def test_converges(self, synth_files, capsys):
        a, b = synth_files
        assert run("sinkhorn", "--ptm-a", str(a), "--ptm-b", str(b),
                   "--rows", "16") == 0
        out = capsys.readouterr().out
        assert "converged" in out and "plan 16x16" in out

    def test_non_convergence_exit_code(self, synth_files):
        a, b = synth_files
        assert run("sinkhorn", "--ptm-a", str(a), "--ptm-b", str(b),
                   "--rows", "16", "--iters", "1", "--tol", "1e-14") == 4

    def test_bad_epsilon_usage(self, synth_files):
        a, b = synth_files
        assert run("sinkhorn", "--ptm-a", str(a), "--ptm-b", str(b),
                   "--epsilon", "0") == 2


class TestInspect:
    def test_describes_checkpoint(self, cv_run, capsys):
        _, _, out = cv_run
        assert run("inspect", "--checkpoint", str(out / "fold_0.ckpt")) == 0
        captured = capsys.readouterr().out
        assert "fusion kind: parrot" in captured
        assert "parameters:" in captured


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 2
        capsys.readouterr()

    def test_missing_required_flags(self, capsys):
        assert run("cv") == 2
        capsys.readouterr()

    def test_no_subcommand(self, capsys):
        assert run() == 2
        capsys.readouterr()
