"""Command-line behavior: exit codes, config resolution, sidecars, and the
agreement between subcommands that must score identically."""

import csv
import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lipwave.cli import main
from lipwave.data import SampleLoader
from lipwave.formats import load_tensor


@pytest.fixture(scope="module")
def av_run(tiny_corpus, tmp_path_factory):
    """One CLI pretrain step in the joint regime."""
    out = str(tmp_path_factory.mktemp("cli_av") / "run")
    rc = main(["pretrain", "--manifest", tiny_corpus, "--regime", "AV",
               "--epochs", "1", "--batch_size", "2", "--max_steps", "1",
               "--out_dir", out])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def mfcc_clf(small_corpus, tmp_path_factory):
    """A CLI-finetuned MFCC-baseline classifier checkpoint."""
    out = str(tmp_path_factory.mktemp("cli_ft") / "run")
    rc = main(["finetune", "--manifest", small_corpus, "--features", "mfcc",
               "--epochs", "1", "--eval_every", "1", "--out_dir", out])
    assert rc == 0
    return os.path.join(out, "classifier.avck")


# -- synthdata ----------------------------------------------------------------------


def test_synthdata_counts_and_digest(tmp_path, capsys):
    args = ["--words", "2", "--identities", "1", "--samples", "3,2,2", "--seed", "5"]
    assert main(["synthdata", "--out", str(tmp_path / "c1")] + args) == 0
    assert "manifest " in capsys.readouterr().out
    loader = SampleLoader(str(tmp_path / "c1" / "manifest.jsonl"))
    assert [len(loader.split(s)) for s in ("train", "val", "test")] == [3, 2, 2]
    assert main(["synthdata", "--out", str(tmp_path / "c2")] + args) == 0
    digests = [hashlib.sha256((tmp_path / d / "manifest.jsonl").read_bytes()).hexdigest()
               for d in ("c1", "c2")]
    assert digests[0] == digests[1]
    info = json.loads((tmp_path / "c1" / "run.json").read_text())
    assert info["command"] == "synthdata" and info["seed"] == 5


def test_synthdata_rejects_single_word(tmp_path, capsys):
    assert main(["synthdata", "--out", str(tmp_path / "x"), "--words", "1"]) == 2
    assert "need ≥ 2 words" in capsys.readouterr().err


def test_synthdata_bad_samples_list(tmp_path, capsys):
    assert main(["synthdata", "--out", str(tmp_path / "x"), "--samples", "1,2"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage error" in capsys.readouterr().err


# -- pretrain -----------------------------------------------------------------------


def test_pretrain_av_writes_all_checkpoints(av_run, capsys):
    names = {"encoder", "identity_encoder", "frame_decoder",
             "mfcc_head", "logmel_head", "wav_head"}
    for name in names:
        assert os.path.exists(os.path.join(av_run, f"{name}.avck")), name
    assert os.path.exists(os.path.join(av_run, "loss.csv"))
    info = json.loads(open(os.path.join(av_run, "run.json")).read())
    assert info["config"]["regime"] == "AV"


def test_pretrain_ini_flag_precedence_and_sidecar_echo(tmp_path, tiny_corpus):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\n"
                   f"manifest = {tiny_corpus}\n"
                   "regime = A\n"
                   "seed = 3\n"
                   "epochs = 1\n"
                   "batch_size = 2\n"
                   "max_steps = 1\n"
                   f"out_dir = {tmp_path / 'run'}\n")
    rc = main(["pretrain", "--config", str(ini), "--seed", "4"])
    assert rc == 0
    info = json.loads((tmp_path / "run" / "run.json").read_text())
    assert info["config"]["seed"] == 4          # flag beats INI
    assert info["config"]["epochs"] == 1        # INI beats default
    assert info["config"]["regime"] == "A"
    assert info["frame_reads"] == 0             # audio regime never opens frames
    assert info["threads"] == 1


def test_pretrain_unknown_ini_key(tmp_path, tiny_corpus, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(f"[run]\nmanifest = {tiny_corpus}\nlr = 1e-4\n")
    assert main(["pretrain", "--config", str(ini)]) == 1
    assert "unknown config key 'lr'" in capsys.readouterr().err


def test_pretrain_bad_ini_section(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[training]\nseed = 1\n")
    assert main(["pretrain", "--config", str(ini)]) == 1
    assert "[run]" in capsys.readouterr().err


def test_pretrain_missing_config_file(capsys):
    assert main(["pretrain", "--config", "/no/such/file.ini"]) == 1
    assert "config file not found" in capsys.readouterr().err


def test_pretrain_requires_manifest(capsys):
    assert main(["pretrain"]) == 1
    assert "manifest is required" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_pretrain_numeric_abort_names_failing_step(tmp_path, tiny_corpus, capsys):
    rc = main(["pretrain", "--manifest", tiny_corpus, "--regime", "A",
               "--epochs", "1", "--batch_size", "2", "--learning_rate", "1e38",
               "--out_dir", str(tmp_path / "blow")])
    assert rc == 3
    err = capsys.readouterr().err
    assert "numeric failure" in err and "pretrain step" in err


# -- finetune / eval ----------------------------------------------------------------


def test_finetune_label_fraction_logs_counts(tmp_path, tiny_corpus, capsys):
    out = tmp_path / "half"
    rc = main(["finetune", "--manifest", tiny_corpus, "--features", "mfcc",
               "--epochs", "1", "--eval_every", "1", "--label-fraction", "0.5",
               "--out_dir", str(out)])
    assert rc == 0
    assert "labeled_train 2" in capsys.readouterr().out
    info = json.loads((out / "run.json").read_text())
    assert info["n_train"] == 2
    assert info["train_counts"] == {"w00": 1, "w01": 1}


def test_finetune_without_encoder_is_supervised_baseline(tmp_path, tiny_corpus, capsys):
    out = tmp_path / "sup"
    rc = main(["finetune", "--manifest", tiny_corpus, "--epochs", "1",
               "--eval_every", "1", "--out_dir", str(out)])
    assert rc == 0
    assert "test_accuracy" in capsys.readouterr().out
    # the from-scratch encoder is trained and persisted alongside the classifier
    assert os.path.exists(out / "encoder.avck")
    assert os.path.exists(out / "classifier.avck")


def test_eval_missing_checkpoint_is_data_error(small_corpus, capsys):
    rc = main(["eval", "--classifier", "/no/such.avck", "--features", "mfcc",
               "--manifest", small_corpus])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_eval_and_noise_sweep_clean_agree(mfcc_clf, small_corpus, tmp_path, capsys):
    rc = main(["eval", "--classifier", mfcc_clf, "--features", "mfcc",
               "--manifest", small_corpus, "--split", "test",
               "--out", str(tmp_path / "eval.json")])
    assert rc == 0
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("test_accuracy")][0]
    eval_acc = line.split()[1]

    sweep_csv = tmp_path / "sweep.csv"
    rc = main(["noise-sweep", "--manifest", small_corpus, "--classifier", mfcc_clf,
               "--features", "mfcc", "--name", "mfcc", "--out", str(sweep_csv)])
    assert rc == 0
    capsys.readouterr()
    with open(sweep_csv) as f:
        rows = list(csv.DictReader(f))
    assert set(rows[0]) == {"model", "-5", "0", "5", "10", "15", "20", "clean"}
    assert rows[0]["model"] == "mfcc"
    assert rows[0]["clean"] == eval_acc       # same scoring path, same rendering
    assert all(0.0 <= float(rows[0][c]) <= 1.0 for c in rows[0] if c != "model")
    assert os.path.exists(str(sweep_csv) + ".json")
    sidecar = json.loads((tmp_path / "eval.json").read_text())
    assert sidecar["accuracy"] == float(eval_acc) or abs(sidecar["accuracy"] - float(eval_acc)) < 5e-7


def test_noise_sweep_requires_a_model(small_corpus, tmp_path, capsys):
    assert main(["noise-sweep", "--manifest", small_corpus,
                 "--out", str(tmp_path / "s.csv")]) == 1
    assert "give --classifier" in capsys.readouterr().err


def test_noise_sweep_bad_model_specs(small_corpus, tmp_path, capsys):
    assert main(["noise-sweep", "--manifest", small_corpus, "--out",
                 str(tmp_path / "s.csv"), "--model", "a:b"]) == 1
    assert "bad --model spec" in capsys.readouterr().err
    assert main(["noise-sweep", "--manifest", small_corpus, "--out",
                 str(tmp_path / "s.csv"), "--model", "m::clf.avck:encoder"]) == 1
    assert "no encoder path" in capsys.readouterr().err


# -- features -----------------------------------------------------------------------


def test_features_dsp_kind_dump(tmp_path, tiny_corpus, capsys):
    out = tmp_path / "logmel"
    rc = main(["features", "--manifest", tiny_corpus, "--out", str(out),
               "--kind", "logmel80"])
    assert rc == 0
    assert "wrote 8 feature files" in capsys.readouterr().out
    files = sorted(f for f in os.listdir(out) if f.endswith(".avtf"))
    assert len(files) == 8
    mat = load_tensor(str(out / files[0]))
    assert mat.shape == (101, 80) and mat.dtype == np.float32
    info = json.loads((out / "run.json").read_text())
    assert info["count"] == 8 and info["kind"] == "logmel80"


def test_features_unknown_kind(tmp_path, tiny_corpus, capsys):
    assert main(["features", "--manifest", tiny_corpus,
                 "--out", str(tmp_path / "x"), "--kind", "plp"]) == 1
    assert "unknown feature kind" in capsys.readouterr().err


def test_features_encoder_latents(tmp_path, tiny_corpus, av_run):
    out = tmp_path / "lat"
    rc = main(["features", "--manifest", tiny_corpus, "--out", str(out),
               "--encoder", os.path.join(av_run, "encoder.avck")])
    assert rc == 0
    files = [f for f in os.listdir(out) if f.endswith(".avtf")]
    assert len(files) == 8
    assert load_tensor(str(out / files[0])).shape == (25, 512)


# -- gradcheck / report -------------------------------------------------------------


def test_gradcheck_tensor_module(capsys):
    assert main(["gradcheck", "--module", "tensor"]) == 0
    out = capsys.readouterr().out
    assert "max rel err" in out
    assert "cases pass below rel err" in out


def test_gradcheck_all_catches_planted_corruption(capsys):
    assert main(["gradcheck", "--module", "all"]) == 0
    out = capsys.readouterr().out
    assert "corrupted-rule fixture" in out and "caught" in out


def test_report_renders_both_tables(tmp_path, capsys):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / "protocol.csv").write_text(
        "model,seed0,seed1,mean\nsupervised,0.70,0.75,0.725\nAV,0.95,1.00,0.975\n")
    (run_dir / "noise_sweep.csv").write_text(
        "model,-5,0,5,10,15,20,clean\nAV,0.20,0.40,0.60,0.80,0.90,0.95,0.97\n")
    assert main(["report", "--run-dir", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "Word accuracy by pretraining regime" in out
    assert "Accuracy under babble noise" in out
    assert "supervised" in out and "0.975" in out
    assert (run_dir / "report.txt").read_text() == out


def test_report_missing_protocol_is_data_error(tmp_path, capsys):
    assert main(["report", "--run-dir", str(tmp_path)]) == 2
    assert "missing report input" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    # one subprocess round trip proves the installed script wiring
    proc = subprocess.run([sys.executable, "-m", "lipwave.cli", "synthdata",
                           "--out", str(tmp_path / "c"), "--words", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "need" in proc.stderr
