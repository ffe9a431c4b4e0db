"""Command-line harness: train, eval, sweep, params, flops, ser, gradcheck.

Every command takes ``--seed`` and is bit-reproducible; outputs are
CSV files with fixed headers plus a human summary on stdout. A config
file of ``section.key = value`` lines (sections ``run`` and ``train``)
can preload any flag; explicit flags win. The ``UJSCC_DATA_DIR``
environment variable supplies the default dataset directory.
"""

import argparse
import csv
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ujscc import channel as ch
from ujscc import checkpoint as ckpt
from ujscc import codec as codec_mod
from ujscc import data as data_mod
from ujscc import pipeline as pl

SCHEMES = ("ujscc", "me1", "me2", "te")
# "tiny" is a debug-scale setting (reduced widths, three orders); the
# published settings carry the real hyperparameters.
SETTING_CHOICES = tuple(sorted(codec_mod.SETTINGS)) + ("tiny",)


def resolve_arch(setting: str) -> codec_mod.ArchitectureConfig:
    return pl.TINY if setting == "tiny" else codec_mod.SETTINGS[setting]


def train_config_for(setting: str, scheme: str, **overrides) -> pl.TrainConfig:
    """Hyperparameters for the setting; the tiny setting borrows basic's,
    truncated to its order count."""
    base = "basic" if setting == "tiny" else setting
    cfg = pl.default_train_config(base, scheme, **overrides)
    K = resolve_arch(setting).K
    if len(cfg.alphas) != K:
        from dataclasses import replace

        cfg = replace(
            cfg,
            alphas=cfg.alphas[:K],
            lambdas=cfg.lambdas[:K],
            stage2_alphas=None if cfg.stage2_alphas is None else cfg.stage2_alphas[: K - 1],
            stage2_lambdas=None if cfg.stage2_lambdas is None else cfg.stage2_lambdas[: K - 1],
        )
    return cfg


@dataclass
class RunConfig:
    setting: str = "basic"
    scheme: str = "ujscc"
    seed: int = 0
    dataset: str = ""
    out_dir: str = "runs/latest"
    epochs: int = 30
    stage2_epochs: int = 0  # 0: same as epochs
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    val_fraction: float = 0.2

    def validate(self) -> None:
        if self.setting not in SETTING_CHOICES:
            raise SystemExit(
                f"unknown setting {self.setting!r}; choose from {SETTING_CHOICES}"
            )
        if self.scheme not in SCHEMES:
            raise SystemExit(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")


def parse_config_file(path: str) -> dict[str, dict[str, str]]:
    """Line-oriented ``section.key = value``; blank lines and # comments
    are ignored."""
    sections: dict[str, dict[str, str]] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise SystemExit(f"{path}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if "." not in key:
            raise SystemExit(f"{path}:{lineno}: key {key!r} missing section prefix")
        section, name = key.split(".", 1)
        sections.setdefault(section, {})[name] = value
    return sections


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes")
    if target_type in (int, float, str):
        return target_type(value)
    return value


def _apply_run_section(cfg: RunConfig, section: dict[str, str]) -> None:
    known = {f.name for f in fields(RunConfig)}
    for key, value in section.items():
        if key not in known:
            raise SystemExit(f"config: unknown run key {key!r}")
        setattr(cfg, key, _coerce(value, type(getattr(cfg, key))))


def _train_overrides(section: dict[str, str]) -> dict:
    out = {}
    tuple_keys = ("alphas", "lambdas", "stage2_alphas", "stage2_lambdas")
    float_keys = ("lr", "val_fraction", "beta_ratio")
    int_keys = ("lr_halving_epochs", "batch_size", "max_epochs", "patience", "seed")
    for key, value in section.items():
        if key in tuple_keys:
            out[key] = tuple(float(v) for v in value.split(","))
        elif key in float_keys:
            out[key] = float(value)
        elif key in int_keys:
            out[key] = int(value)
        else:
            raise SystemExit(f"config: unknown train key {key!r}")
    return out


def _load_dataset(spec: str, seed: int, split: str) -> data_mod.ImageDataset:
    if not spec:
        default = data_mod.default_data_dir()
        spec = str(default) if default else "synthetic:512"
    if spec.startswith("synthetic:"):
        count = int(spec.split(":", 1)[1])
        return data_mod.synthetic_dataset(count, seed=seed + (0 if split == "train" else 1))
    return data_mod.load_cifar10(spec, split)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _history_csv(path: Path, fit: pl.FitResult) -> None:
    header = ["epoch", "lr", "train_loss", "val_loss"] + [f"L_k{k}" for k in fit.bands]
    rows = [
        [r.epoch, f"{r.lr:.10g}", f"{r.train_loss:.10g}", f"{r.val_loss:.10g}"]
        + [f"{b:.10g}" for b in r.band_losses]
        for r in fit.history
    ]
    _write_csv(path, header, rows)


# -- commands -------------------------------------------------------------------


def cmd_train(cfg: RunConfig, train_overrides: dict) -> int:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    overrides = dict(
        max_epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        patience=cfg.patience,
        val_fraction=cfg.val_fraction,
        seed=cfg.seed,
    )
    overrides.update(train_overrides)
    tcfg = train_config_for(cfg.setting, cfg.scheme, **overrides)
    dataset = _load_dataset(cfg.dataset, cfg.seed, "train")
    system = pl.build_system(resolve_arch(cfg.setting), cfg.scheme, cfg.seed)
    extra = {"seed": cfg.seed, "scheme_trained": cfg.scheme, "epochs": cfg.epochs}

    if cfg.scheme in ("ujscc", "me1"):
        fit = pl.train_ujscc(system, dataset, tcfg)
        _history_csv(out / "train_log.csv", fit)
        ckpt.save_system(out / "model.ujsc", system, extra)
        print(f"trained {cfg.scheme} ({cfg.setting}) for {len(fit.history)} epochs; "
              f"best val {fit.best_val:.6f} @ epoch {fit.best_epoch}")
        print(f"checkpoint: {out / 'model.ujsc'}")
    elif cfg.scheme == "me2":
        stages = pl.train_me2(
            system, dataset, tcfg, stage2_epochs=cfg.stage2_epochs or None
        )
        _history_csv(out / "train_log_stage1.csv", stages["stage1"])
        _history_csv(out / "train_log_stage2.csv", stages["stage2"])
        ckpt.save_system(out / "model.ujsc", system, extra)
        print(f"trained me2 ({cfg.setting}); stage1 best val "
              f"{stages['stage1'].best_val:.6f}, stage2 best val "
              f"{stages['stage2'].best_val:.6f}")
        print(f"checkpoint: {out / 'model.ujsc'}")
    else:  # te
        fits = pl.train_te(system, dataset, tcfg)
        for k, fit in fits.items():
            _history_csv(out / f"train_log_k{k}.csv", fit)
        paths = ckpt.save_te_checkpoints(out, system, extra)
        print(f"trained te ({cfg.setting}); checkpoints: "
              + ", ".join(str(p) for p in paths))
    return 0


def _load_any_system(path: str):
    p = Path(path)
    if p.is_dir():
        bundle = sorted(p.glob("te_k*.ujsc"))
        if not bundle:
            raise SystemExit(f"{p}: no te_k*.ujsc checkpoints found")
        return ckpt.load_te_bundle(bundle)
    return ckpt.load_system(p)


def _eval_common(args, snr_grid: list[float]) -> int:
    system, _ = _load_any_system(args.checkpoint)
    dataset = _load_dataset(args.dataset, args.seed, "test")
    if args.limit:
        dataset = dataset.take(args.limit)
    rows = pl.evaluate_sweep(
        system, dataset, snr_grid, trials=args.trials, seed=args.seed
    )
    out_rows = [
        [f"{r.snr_db:.10g}", r.k, r.modulation, f"{r.mse:.10g}", f"{r.psnr:.10g}",
         f"{r.ssim:.10g}", f"{r.ser:.10g}"]
        for r in rows
    ]
    _write_csv(Path(args.out), ["snr_db", "k", "modulation", "mse", "psnr", "ssim", "ser"], out_rows)
    for r in rows:
        print(f"snr {r.snr_db:6.2f} dB -> order {r.modulation:3d} "
              f"(k={r.k}): psnr {r.psnr:6.2f} dB ssim {r.ssim:.4f} ser {r.ser:.4g}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    grid = [float(v) for v in args.snr.split(",")]
    return _eval_common(args, grid)


def cmd_sweep(args) -> int:
    grid = list(np.arange(args.snr_start, args.snr_stop + 1e-9, args.snr_step))
    return _eval_common(args, [float(g) for g in grid])


def _build_count_systems(setting: str, scheme: str):
    arch = resolve_arch(setting)
    rng = np.random.default_rng(0)
    if scheme == "te":
        return codec_mod.build_te_bundle(arch, rng)
    return [codec_mod.build_codec(arch, "me" if scheme in ("me1", "me2", "me") else "ujscc", rng)]


def cmd_params(args) -> int:
    scheme = "me" if args.scheme in ("me1", "me2") else args.scheme
    codecs = _build_count_systems(args.setting, scheme)
    count = (
        codec_mod.count_params_bundle(codecs)
        if len(codecs) > 1
        else codec_mod.count_params(codecs[0])
    )
    print(f"setting={args.setting} scheme={scheme} total={count.total} bn={count.bn_total}")
    if args.per_layer:
        for name, n in count.per_layer:
            print(f"  {name}: {n}")
    if args.out:
        _write_csv(
            Path(args.out),
            ["layer", "params"],
            [[name, n] for name, n in count.per_layer] + [["total", count.total], ["bn_total", count.bn_total]],
        )
    return 0


def cmd_flops(args) -> int:
    scheme = "me" if args.scheme in ("me1", "me2") else args.scheme
    codecs = _build_count_systems(args.setting, scheme)
    ks = [args.k] if args.k else list(range(1, resolve_arch(args.setting).K + 1))
    rows = []
    for k in ks:
        codec = codecs[k - 1] if len(codecs) > 1 else codecs[0]
        fc = codec_mod.count_flops(codec, k)
        rows.append([k, fc.encoder, fc.decoder])
        print(f"k={k}: encoder {fc.encoder / 1e9:.4f} GFLOPs, "
              f"decoder {fc.decoder / 1e9:.4f} GFLOPs")
    if args.out:
        _write_csv(Path(args.out), ["k", "encoder_flops", "decoder_flops"], rows)
    return 0


def cmd_ser(args) -> int:
    from ujscc.nn.rng import rng_stream, STREAM_EVAL

    ms = [int(v) for v in args.m.split(",")]
    grid = [float(v) for v in args.snr.split(",")]
    rng = rng_stream(args.seed, STREAM_EVAL)
    rows = []
    worst = 0.0
    for m in ms:
        for snr_db in grid:
            mc, std_err = ch.measure_ser(m, snr_db, args.trials, rng)
            ana = ch.analytic_ser(m, snr_db)
            rows.append(
                [m, f"{snr_db:.10g}", args.trials, f"{mc:.10g}", f"{ana:.10g}", f"{std_err:.10g}"]
            )
            sigmas = abs(mc - ana) / std_err if std_err > 0 else 0.0
            worst = max(worst, sigmas)
            print(f"m={m:4d} snr={snr_db:6.2f} dB: mc {mc:.5f} analytic {ana:.5f} "
                  f"({sigmas:.2f} sigma)")
    _write_csv(
        Path(args.out),
        ["m", "snr_db", "trials", "ser_mc", "ser_analytic", "std_err"],
        rows,
    )
    print(f"wrote {args.out}; worst deviation {worst:.2f} sigma")
    return 0


def cmd_gradcheck(args) -> int:
    arch = pl.TINY if args.setting == "tiny" else codec_mod.SETTINGS[args.setting]
    report = pl.training_graph_gradcheck(
        arch=arch, scheme=args.scheme, seed=args.seed, samples=args.samples
    )
    status = "PASS" if report.passed(1e-4) else "FAIL"
    print(
        f"gradcheck {args.setting}/{args.scheme}: max rel err "
        f"{report.max_rel_err:.3g} over {report.checked} coordinates "
        f"({report.skipped} skipped at kinks) -> {status}"
    )
    if not report.passed(1e-4):
        print(f"worst: {report.worst}")
        return 1
    return 0


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ujscc",
        description="Universal joint source-channel coding over digital modulations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a scheme and write a checkpoint")
    p_train.add_argument("--config", help="section.key = value config file")
    p_train.add_argument("--setting", choices=SETTING_CHOICES)
    p_train.add_argument("--scheme", choices=SCHEMES)
    p_train.add_argument("--dataset", help="CIFAR-10 dir or synthetic:<count>")
    p_train.add_argument("--out", dest="out_dir")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--stage2-epochs", type=int, dest="stage2_epochs")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--patience", type=int)
    p_train.add_argument("--val-fraction", type=float, dest="val_fraction")

    def add_eval_args(p):
        p.add_argument("--checkpoint", required=True,
                       help="checkpoint file, or directory of te_k*.ujsc")
        p.add_argument("--dataset", default="")
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--limit", type=int, default=0, help="cap test images")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="eval.csv")

    p_eval = sub.add_parser("eval", help="metrics at explicit SNR points")
    add_eval_args(p_eval)
    p_eval.add_argument("--snr", required=True, help="comma-separated dB values")

    p_sweep = sub.add_parser("sweep", help="metrics over an SNR grid")
    add_eval_args(p_sweep)
    p_sweep.add_argument("--snr-start", type=float, default=0.0)
    p_sweep.add_argument("--snr-stop", type=float, default=28.0)
    p_sweep.add_argument("--snr-step", type=float, default=2.0)

    p_params = sub.add_parser("params", help="parameter-count report")
    p_params.add_argument("--setting", required=True, choices=SETTING_CHOICES)
    p_params.add_argument("--scheme", required=True, choices=("ujscc", "me", "me1", "me2", "te"))
    p_params.add_argument("--per-layer", action="store_true", dest="per_layer")
    p_params.add_argument("--out", default="")

    p_flops = sub.add_parser("flops", help="analytic FLOPs report")
    p_flops.add_argument("--setting", required=True, choices=SETTING_CHOICES)
    p_flops.add_argument("--scheme", required=True, choices=("ujscc", "me", "me1", "me2", "te"))
    p_flops.add_argument("--k", type=int, default=0, help="order index; 0 = all")
    p_flops.add_argument("--out", default="")

    p_ser = sub.add_parser("ser", help="Monte-Carlo vs analytic symbol error rate")
    p_ser.add_argument("--m", default="2,4,16,64,256")
    p_ser.add_argument("--snr", default="0,2,5,8,12,16,20,23,26")
    p_ser.add_argument("--trials", type=int, default=100_000)
    p_ser.add_argument("--seed", type=int, default=0)
    p_ser.add_argument("--out", default="ser.csv")

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_gc.add_argument("--setting", default="tiny",
                      choices=["tiny"] + sorted(codec_mod.SETTINGS))
    p_gc.add_argument("--scheme", default="ujscc", choices=("ujscc", "me"))
    p_gc.add_argument("--samples", type=int, default=8)
    p_gc.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        cfg = RunConfig()
        train_overrides: dict = {}
        if args.config:
            sections = parse_config_file(args.config)
            _apply_run_section(cfg, sections.get("run", {}))
            train_overrides = _train_overrides(sections.get("train", {}))
        for name in (
            "setting", "scheme", "dataset", "out_dir", "seed", "epochs",
            "stage2_epochs", "batch_size", "lr", "patience", "val_fraction",
        ):
            value = getattr(args, name, None)
            if value is not None:
                setattr(cfg, name, value)
        if not cfg.dataset:
            cfg.dataset = ""
        return cmd_train(cfg, train_overrides)
    if args.command == "eval":
        return cmd_eval(args)
    if args.command == "sweep":
        return cmd_sweep(args)
    if args.command == "params":
        return cmd_params(args)
    if args.command == "flops":
        return cmd_flops(args)
    if args.command == "ser":
        return cmd_ser(args)
    if args.command == "gradcheck":
        return cmd_gradcheck(args)
    raise SystemExit(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
