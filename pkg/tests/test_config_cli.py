"""Configuration parsing and the command-line interface."""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rispilot.cli import CE_CKPT, FUS_CKPT, cell_dir, main
from rispilot.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from rispilot.models import CeNet, FusNet, load_model
from rispilot.pipeline import INIT, SWEEP_HEADER, SystemConfig, cell_seed, stream


class TestConfig:
    def test_roundtrip_default(self):
        cfg = ExperimentConfig()
        assert parse_config(dump_config(cfg)) == cfg

    @given(st.integers(0, 2**64 - 1), st.floats(0.01, 0.99), st.sampled_from([3, 5, 7]),
           st.sampled_from(["desk", "paper"]), st.integers(1, 8))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_random(self, seed, lam, taps, scale, workers):
        cfg = ExperimentConfig().with_scale(scale).with_seed(seed)
        cfg = replace(cfg, workers=workers, split=replace(cfg.split, lam=lam),
                      channel=replace(cfg.channel, n_taps=taps))
        text = dump_config(cfg)
        assert parse_config(text) == cfg
        assert dump_config(parse_config(text)) == text

    def test_partial_file_uses_defaults(self):
        cfg = parse_config("[power]\nlambda = 0.2\n[run]\nseed = 4\n")
        assert cfg.split.lam == 0.2 and cfg.seed == 4 and cfg.channel.seed == 4 and cfg.train.seed == 4
        assert cfg.channel.n_subcarriers == 32

    def test_paper_scale(self):
        cfg = parse_config("[run]\nscale = paper\n")
        assert (cfg.train.n_train, cfg.train.n_val) == (100_000, 20_000)

    def test_lists_and_comments(self):
        cfg = parse_config("# header\n[sweep]\nsnr_db = 0, 9, 18  # three points\ntaps = 3,7\n")
        assert cfg.sweep.snr_db == (0, 9, 18) and cfg.sweep.taps == (3, 7)

    @pytest.mark.parametrize("text, needle", [
        ("[channel]\nbogus = 1\n", "unknown key channel.bogus"),
        ("[nope]\n", "unknown section"),
        ("lambda = 0.1\n", "outside of a [section]"),
        ("[power]\nlambda = 0.1\nlambda = 0.2\n", "duplicate key"),
        ("[power]\nlambda = abc\n", "power.lambda"),
        ("[power]\nlambda = 1.5\n", "lambda"),
        ("[channel]\nn_taps = 40\n", "cp"),
        ("[sweep]\nmode = diagonal\n", "sweep.mode"),
        ("[run]\nseed = -1\n", "run.seed"),
        ("[run]\nscale = huge\n", "run.scale"),
        ("[power]\nlambda\n", "key = value"),
    ])
    def test_errors_name_the_field(self, text, needle):
        with pytest.raises(ConfigError, match=needle.replace("[", r"\[").replace("]", r"\]").replace(".", r"\.")):
            parse_config(text, "exp.cfg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")


def small_cfg(out, **sweep):
    cfg = ExperimentConfig().with_seed(99)
    cfg = replace(cfg, out=str(out),
                  train=replace(cfg.train, n_train=160, n_val=40, epochs_ce=1, epochs_fus=1),
                  sweep=replace(cfg.sweep, snr_db=(12,), lambdas=(0.15,), taps=(5,), n_frames=10, **sweep))
    path = out / "exp.cfg"
    out.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg))
    return cfg, str(path)


class TestCli:
    def test_missing_config_exit_1(self, tmp_path, capsys):
        missing = tmp_path / "nope.cfg"
        assert main(["train", "--config", str(missing)]) == 1
        assert str(missing) in capsys.readouterr().err

    def test_unknown_key_exit_1(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("[train]\nepochs = 3\n")
        assert main(["sweep", "--config", str(p)]) == 1
        assert "train.epochs" in capsys.readouterr().err

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        names = {line.split()[1] for line in out.splitlines() if line.startswith("PASS")}
        assert len(names) >= 10

    def test_selftest_negative_control(self, capsys):
        assert main(["selftest", "--corrupt-backward"]) == 3
        err = capsys.readouterr().err
        assert "grad_check" in err

    def test_zero_epoch_checkpoints_equal_seeded_init(self, tmp_path):
        cfg, path = small_cfg(tmp_path / "run")
        assert main(["train", "--config", path, "--epochs-ce", "0", "--epochs-fus", "0"]) == 0
        d = cell_dir(tmp_path / "run", 0.15, 5)
        cseed = cell_seed(cfg.train.seed, SystemConfig(cfg.channel, cfg.split))
        ce0 = CeNet.initialize(32, stream(cseed, INIT, 0))
        fus0 = FusNet.initialize(32, stream(cseed, INIT, 1))
        assert np.array_equal(load_model(d / CE_CKPT).net.flat, ce0.net.flat)
        assert np.array_equal(load_model(d / FUS_CKPT).net.flat, fus0.net.flat)
        loss = (d / "loss_ce.csv").read_text().splitlines()
        assert len(loss) == 2 and loss[1].startswith("0,")

    def test_tiny_sweep_six_rows_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            _, path = small_cfg(tmp_path / name)
            assert main(["train", "--config", path]) == 0
            assert main(["sweep", "--config", path]) == 0
            outs.append((tmp_path / name / "results.csv").read_bytes())
        lines = outs[0].decode().splitlines()
        assert lines[0] == ",".join(SWEEP_HEADER) and len(lines) == 1 + 6
        assert outs[0] == outs[1]

    def test_resume_skips_trained_cells(self, tmp_path, capsys):
        _, path = small_cfg(tmp_path / "r")
        assert main(["train", "--config", path]) == 0
        ckpt = cell_dir(tmp_path / "r", 0.15, 5) / CE_CKPT
        before = ckpt.read_bytes()
        assert main(["train", "--config", path, "--resume"]) == 0
        assert "skipped" in capsys.readouterr().out
        assert ckpt.read_bytes() == before

    def test_sweep_without_checkpoints_exit_1(self, tmp_path, capsys):
        _, path = small_cfg(tmp_path / "s")
        assert main(["sweep", "--config", path]) == 1
        assert "missing checkpoint" in capsys.readouterr().err

    def test_n_mismatch_exit_1(self, tmp_path, capsys):
        _, path = small_cfg(tmp_path / "m")
        assert main(["train", "--config", path, "--epochs-ce", "0", "--epochs-fus", "0"]) == 0
        text = (tmp_path / "m" / "exp.cfg").read_text().replace("n_subcarriers = 32", "n_subcarriers = 64")
        (tmp_path / "m" / "exp64.cfg").write_text(text)
        assert main(["sweep", "--config", str(tmp_path / "m" / "exp64.cfg")]) == 1
        assert "N=32" in capsys.readouterr().err

    def test_failed_marker_blocks_sweep(self, tmp_path, capsys):
        _, path = small_cfg(tmp_path / "f")
        assert main(["train", "--config", path, "--epochs-ce", "0", "--epochs-fus", "0"]) == 0
        (cell_dir(tmp_path / "f", 0.15, 5) / "FAILED").write_text("training diverged\n")
        assert main(["sweep", "--config", path]) == 1
        assert "failed" in capsys.readouterr().err

    def test_bad_workers_exit_1(self, tmp_path):
        assert main(["analyze", "--out", str(tmp_path), "--workers", "0", "--skip-runtime"]) == 1

    def test_analyze_tables_idempotent(self, tmp_path):
        assert main(["analyze", "--out", str(tmp_path), "--skip-runtime"]) == 0
        first = {p: (tmp_path / p).read_bytes() for p in ("complexity.csv", "energy.csv")}
        assert main(["analyze", "--out", str(tmp_path), "--skip-runtime"]) == 0
        assert first == {p: (tmp_path / p).read_bytes() for p in first}
        assert b"32,86016,200768" in first["complexity.csv"]
        assert b"e_nonsup,64T0P" in first["energy.csv"]

    def test_analyze_runtime(self, tmp_path):
        assert main(["analyze", "--out", str(tmp_path), "--frames", "100", "--repetitions", "1"]) == 0
        lines = (tmp_path / "runtime.csv").read_text().splitlines()
        assert lines[0].startswith("G,n_frames") and [l.split(",")[0] for l in lines[1:]] == ["12", "24", "48"]
