"""Command-line entry point: ``rispilot {train,sweep,analyze,selftest}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure or training
divergence, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .neuralnet import TrainingDivergence

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3
CE_CKPT, FUS_CKPT = "ce_net.ckpt", "fus_net.ckpt"

log = logging.getLogger("rispilot")


def cell_dir(out: Path, lam: float, taps: int) -> Path:
    return out / f"cell_lambda{lam:g}_L{taps}"


def _cells(cfg: ExperimentConfig):
    from .pipeline import sweep_cells
    return sweep_cells(cfg.sweep.lambdas, cfg.sweep.taps, cfg.split.lam, cfg.channel.n_taps, cfg.sweep.mode)


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.scale:
        cfg = cfg.with_scale(args.scale)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.workers is not None:
        if args.workers <= 0:
            raise ConfigError("--workers: must be positive")
        cfg = replace(cfg, workers=args.workers)
    if args.out:
        cfg = replace(cfg, out=args.out)
    train = cfg.train
    if getattr(args, "epochs_ce", None) is not None:
        train = replace(train, epochs_ce=args.epochs_ce)
    if getattr(args, "epochs_fus", None) is not None:
        train = replace(train, epochs_fus=args.epochs_fus)
    try:
        return replace(cfg, train=train)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- subcommands ---------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, base_only: bool = False, resume: bool = False) -> int:
    """Train one CE-Net/FUS-Net pair per sweep cell and write checkpoints and loss curves.

    With ``resume``, cells that already hold both checkpoints (and no FAILED
    marker) are skipped; every cell draws from its own streams, so the result
    is the same as training from scratch.
    """
    from .pipeline import train_pair

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    cells = [(cfg.split.lam, cfg.channel.n_taps)] if base_only else _cells(cfg)
    for lam, taps in cells:
        d = cell_dir(out, lam, taps)
        if resume and all((d / f).is_file() for f in (CE_CKPT, FUS_CKPT)) and not (d / "FAILED").exists():
            print(f"cell lambda={lam:g} L={taps}: checkpoints present, skipped")
            continue
        d.mkdir(exist_ok=True)
        (d / "FAILED").unlink(missing_ok=True)
        sys_cell = cfg.system.with_cell(lam, taps)
        t0 = time.perf_counter()
        try:
            pair = train_pair(cfg.train, sys_cell, workers=cfg.workers)
        except TrainingDivergence as exc:
            (d / "FAILED").write_text(f"training diverged: {exc}\n")
            print(f"error: cell lambda={lam:g} L={taps}: training diverged: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        pair.ce.save(d / CE_CKPT)
        pair.fus.save(d / FUS_CKPT)
        (d / "loss_ce.csv").write_text(pair.ce_result.to_csv())
        (d / "loss_fus.csv").write_text(pair.fus_result.to_csv())
        print(f"trained cell lambda={lam:g} L={taps} in {time.perf_counter() - t0:.1f} s -> {d}")
    return EXIT_OK


def _load_pair(ckpt_root: Path, lam: float, taps: int, n: int):
    from .models import load_model
    from .pipeline import TrainedPair

    d = cell_dir(ckpt_root, lam, taps)
    for name in (CE_CKPT, FUS_CKPT):
        if not (d / name).is_file():
            raise ConfigError(f"missing checkpoint {d / name}; run 'rispilot train' first")
    if (d / "FAILED").exists():
        raise ConfigError(f"checkpoints in {d} are flagged as failed: {(d / 'FAILED').read_text().strip()}")
    try:
        ce = load_model(d / CE_CKPT, expect="ce-net", n=n)
        fus = load_model(d / FUS_CKPT, expect="fus-net", n=n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return TrainedPair(ce, fus, None, None)


def cmd_sweep(cfg: ExperimentConfig, checkpoints: str | None = None) -> int:
    """Evaluate all methods over every cell and SNR point; writes ``results.csv``."""
    from .pipeline import evaluate_sweep

    out = Path(cfg.out)
    root = Path(checkpoints) if checkpoints else out
    cells = _cells(cfg)
    pairs = {(lam, taps): _load_pair(root, lam, taps, cfg.channel.n_subcarriers) for lam, taps in cells}
    report = evaluate_sweep(pairs, cfg.system, cfg.sweep.snr_db, cells, cfg.sweep.n_frames, cfg.seed,
                            workers=cfg.workers)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.to_csv())
    print(f"wrote {len(report.rows)} rows to {out / 'results.csv'}")
    return EXIT_OK


def cmd_analyze(cfg: ExperimentConfig, checkpoints: str | None = None, n_frames: int = 1000,
                repetitions: int = 5, skip_runtime: bool = False) -> int:
    """Write ``complexity.csv``, ``energy.csv`` and (unless skipped) ``runtime.csv``."""
    from .analysis import (ResourceModel, complexity_csv, complexity_table, energy_csv,
                           runtime_bench, runtime_csv)
    from .models import CeNet, FusNet
    from .pipeline import TrainedPair, simulate_frames, SWEEP

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "complexity.csv").write_text(complexity_csv(complexity_table([32, 64])))
    (out / "energy.csv").write_text(energy_csv(ResourceModel(32, 32, 1.0, 1.0, cfg.split.lam)))
    if skip_runtime:
        print(f"wrote complexity.csv, energy.csv to {out}")
        return EXIT_OK

    sys_cfg = cfg.system
    root = Path(checkpoints) if checkpoints else out
    try:
        pair = _load_pair(root, cfg.split.lam, cfg.channel.n_taps, sys_cfg.n)
    except ConfigError:
        # timing does not depend on the trained weights; fall back to seeded initial nets
        rng = np.random.default_rng(cfg.seed)
        pair = TrainedPair(CeNet.initialize(sys_cfg.n, rng), FusNet.initialize(sys_cfg.n, rng), None, None)
        log.info("no checkpoints under %s; timing freshly initialized networks", root)
    reports = {}
    for g in (12, 24, 48):
        sys_g = replace(sys_cfg, channel=replace(sys_cfg.channel, n_subsurfaces=g))
        frames = simulate_frames(sys_g, n_frames, cfg.seed, (SWEEP, g), (12,))
        reports[g] = runtime_bench(pair, sys_g, frames.y, repetitions=repetitions)
    (out / "runtime.csv").write_text(runtime_csv(reports))
    print(f"wrote complexity.csv, energy.csv, runtime.csv to {out}")
    return EXIT_OK


def cmd_selftest(seed: int = 0, corrupt_backward: bool = False) -> int:
    from .selftest import run_selftest

    t0 = time.perf_counter()
    results = run_selftest(seed, corrupt_backward)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:34s} {r.seconds:7.3f} s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed in {time.perf_counter() - t0:.1f} s")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    common.add_argument("--workers", type=int, help="worker processes for data generation")
    common.add_argument("--scale", choices=("desk", "paper"), help="training-set size preset")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rispilot", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", parents=[common], help="train CE-Net then FUS-Net per sweep cell")
    t.add_argument("--epochs-ce", type=int)
    t.add_argument("--epochs-fus", type=int)
    t.add_argument("--base-only", action="store_true", help="train only the configured (lambda, L) cell")
    t.add_argument("--resume", action="store_true", help="skip cells that already have checkpoints")
    s = sub.add_parser("sweep", parents=[common], help="NMSE/BER sweep over SNR, lambda and L")
    s.add_argument("--checkpoints", help="directory holding per-cell checkpoints (default: --out)")
    a = sub.add_parser("analyze", parents=[common], help="complexity, energy and running-time tables")
    a.add_argument("--checkpoints")
    a.add_argument("--frames", type=int, default=1000)
    a.add_argument("--repetitions", type=int, default=5)
    a.add_argument("--skip-runtime", action="store_true", help="write only the complexity and energy tables")
    st = sub.add_parser("selftest", parents=[common], help="fast property suite")
    st.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "selftest":
        return cmd_selftest(args.seed or 0, args.corrupt_backward)
    try:
        cfg = _build_config(args)
        if args.command == "train":
            if cfg.train.epochs_ce < 0 or cfg.train.epochs_fus < 0:
                raise ConfigError("--epochs-ce/--epochs-fus: must be non-negative")
            return cmd_train(cfg, args.base_only, args.resume)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.checkpoints)
        return cmd_analyze(cfg, args.checkpoints, args.frames, args.repetitions, args.skip_runtime)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergence, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
