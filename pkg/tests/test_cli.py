"""CLI surface: subcommands, CSV contracts, config files, reproducibility."""

import csv
import os
from pathlib import Path

import numpy as np
import pytest

from ujscc.cli import main, parse_config_file


def run_cli(*argv):
    return main(list(argv))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_params_command_reports_published_totals(capsys):
    assert run_cli("params", "--setting", "basic", "--scheme", "ujscc") == 0
    out = capsys.readouterr().out
    assert "total=258098" in out and "bn=6514" in out


def test_params_command_te_and_csv(tmp_path, capsys):
    out_csv = tmp_path / "params.csv"
    assert run_cli(
        "params", "--setting", "basic", "--scheme", "te", "--out", str(out_csv)
    ) == 0
    assert "total=1203634" in capsys.readouterr().out
    header, rows = read_csv(out_csv)
    assert header == ["layer", "params"]
    assert ["total", "1203634"] in rows


def test_flops_command(tmp_path, capsys):
    out_csv = tmp_path / "flops.csv"
    assert run_cli(
        "flops", "--setting", "basic", "--scheme", "ujscc", "--out", str(out_csv)
    ) == 0
    header, rows = read_csv(out_csv)
    assert header == ["k", "encoder_flops", "decoder_flops"]
    assert len(rows) == 5
    assert abs(int(rows[0][1]) / 1e9 - 0.205) < 0.005


def test_ser_command_csv_contract(tmp_path, capsys):
    out_csv = tmp_path / "ser.csv"
    assert run_cli(
        "ser", "--m", "4", "--snr", "5", "--trials", "50000",
        "--seed", "3", "--out", str(out_csv),
    ) == 0
    header, rows = read_csv(out_csv)
    assert header == ["m", "snr_db", "trials", "ser_mc", "ser_analytic", "std_err"]
    m, snr, trials, mc, ana, se = rows[0]
    assert (m, snr, trials) == ("4", "5", "50000")
    assert abs(float(mc) - float(ana)) < 3 * float(se)


def test_gradcheck_command(capsys):
    assert run_cli("gradcheck", "--setting", "tiny", "--samples", "4") == 0
    assert "PASS" in capsys.readouterr().out


def _train_args(out_dir, extra=()):
    return (
        "train", "--setting", "tiny", "--scheme", "ujscc",
        "--dataset", "synthetic:48", "--epochs", "2", "--batch-size", "16",
        "--seed", "7", "--out", str(out_dir), *extra,
    )


def test_train_eval_roundtrip(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*_train_args(out)) == 0
    ckpt = out / "model.ujsc"
    log = out / "train_log.csv"
    assert ckpt.is_file() and log.is_file()
    header, rows = read_csv(log)
    assert header == ["epoch", "lr", "train_loss", "val_loss", "L_k1", "L_k2", "L_k3"]
    assert len(rows) == 2

    eval_csv = tmp_path / "eval.csv"
    assert run_cli(
        "eval", "--checkpoint", str(ckpt), "--dataset", "synthetic:8",
        "--snr", "2,25", "--out", str(eval_csv), "--seed", "1",
    ) == 0
    header, rows = read_csv(eval_csv)
    assert header == ["snr_db", "k", "modulation", "mse", "psnr", "ssim", "ser"]
    assert [r[0] for r in rows] == ["2", "25"]
    assert [r[1] for r in rows] == ["1", "3"]


def test_sweep_grid(tmp_path):
    out = tmp_path / "run"
    run_cli(*_train_args(out))
    sweep_csv = tmp_path / "sweep.csv"
    assert run_cli(
        "sweep", "--checkpoint", str(out / "model.ujsc"),
        "--dataset", "synthetic:4", "--snr-start", "0", "--snr-stop", "24",
        "--snr-step", "8", "--out", str(sweep_csv),
    ) == 0
    _, rows = read_csv(sweep_csv)
    assert [r[0] for r in rows] == ["0", "8", "16", "24"]


def test_train_twice_bit_identical(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    run_cli(*_train_args(out1))
    run_cli(*_train_args(out2))
    assert (out1 / "model.ujsc").read_bytes() == (out2 / "model.ujsc").read_bytes()
    assert (out1 / "train_log.csv").read_text() == (out2 / "train_log.csv").read_text()


def test_train_te_writes_bundle(tmp_path):
    out = tmp_path / "te"
    assert run_cli(
        "train", "--setting", "tiny", "--scheme", "te",
        "--dataset", "synthetic:24", "--epochs", "1", "--batch-size", "8",
        "--seed", "1", "--out", str(out),
    ) == 0
    names = sorted(p.name for p in out.glob("te_k*.ujsc"))
    assert names == ["te_k1.ujsc", "te_k2.ujsc", "te_k3.ujsc"]
    assert (out / "train_log_k2.csv").is_file()
    eval_csv = out / "eval.csv"
    assert run_cli(
        "eval", "--checkpoint", str(out), "--dataset", "synthetic:4",
        "--snr", "25", "--out", str(eval_csv),
    ) == 0


def test_train_me2_writes_two_stage_logs(tmp_path):
    out = tmp_path / "me2"
    assert run_cli(
        "train", "--setting", "tiny", "--scheme", "me2",
        "--dataset", "synthetic:24", "--epochs", "1", "--stage2-epochs", "1",
        "--batch-size", "8", "--seed", "2", "--out", str(out),
    ) == 0
    assert (out / "train_log_stage1.csv").is_file()
    assert (out / "train_log_stage2.csv").is_file()
    header, rows = read_csv(out / "train_log_stage2.csv")
    assert header == ["epoch", "lr", "train_loss", "val_loss", "L_k1", "L_k2"]


def test_config_file_parsing_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# experiment config\n"
        "run.setting = tiny\n"
        "run.scheme = ujscc\n"
        "run.epochs = 1\n"
        "run.dataset = synthetic:24\n"
        "run.batch_size = 8\n"
        "train.lr = 0.002\n"
        "train.alphas = 2,1,0.5\n",
        encoding="utf-8",
    )
    parsed = parse_config_file(cfg)
    assert parsed["run"]["setting"] == "tiny"
    assert parsed["train"]["alphas"] == "2,1,0.5"

    out = tmp_path / "cfg_run"
    assert run_cli(
        "train", "--config", str(cfg), "--seed", "9", "--out", str(out),
        "--epochs", "2",  # flag overrides the file's epochs=1
    ) == 0
    _, rows = read_csv(out / "train_log.csv")
    assert len(rows) == 2
    assert float(rows[0][1]) == pytest.approx(0.002)  # lr from config file


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("run.unknown_key = 1\n", encoding="utf-8")
    with pytest.raises(SystemExit, match="unknown run key"):
        run_cli("train", "--config", str(cfg))


def test_config_file_rejects_malformed_lines(tmp_path):
    cfg = tmp_path / "bad2.cfg"
    cfg.write_text("just some words\n", encoding="utf-8")
    with pytest.raises(SystemExit, match="expected"):
        parse_config_file(cfg)


def test_dataset_env_default(tmp_path, monkeypatch):
    """UJSCC_DATA_DIR is consulted when no dataset is given; a missing
    directory then fails with the loader's error."""
    monkeypatch.setenv("UJSCC_DATA_DIR", str(tmp_path / "nowhere"))
    with pytest.raises(FileNotFoundError):
        run_cli(
            "train", "--setting", "tiny", "--scheme", "ujscc",
            "--epochs", "1", "--out", str(tmp_path / "x"),
        )
