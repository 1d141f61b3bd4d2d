"""Command line behavior: flags, files produced, exit codes."""

import numpy as np
import pytest

from wattgate import cli, data


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def house_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_house")
    code = run(["synth", "--out", str(out), "--days", "0.4", "--seed", "4"])
    assert code == 0
    return out


def train_args(house_dir, out, extra=()):
    return (["train", "--manifest", str(house_dir / "manifest.txt"),
             "--out", str(out), "--variant", "sgn", "--s", "8", "--w", "16",
             "--steps", "3", "--lr", "1e-3", "--batch-size", "4",
             "--seed", "5", "--appliance", "kettle"] + list(extra))


class TestSynth:
    def test_writes_channels_and_manifest(self, house_dir):
        manifest = data.load_manifest(house_dir / "manifest.txt")
        agg, apps = data.load_household(manifest)
        assert set(apps) == {"fridge", "kettle", "dish_washer"}
        assert agg.n == 3456   # 0.4 days at 10 s
        a, b = manifest.train_span
        c, d = manifest.test_span
        assert (a, b, c, d) == (0, 2304, 2304, 3456)

    def test_threshold_rule(self, house_dir):
        manifest = data.load_manifest(house_dir / "manifest.txt")
        # halfway between standby and the lowest active level
        assert manifest.thresholds["kettle"] == pytest.approx(
            1.10 + 0.5 * (2000.0 - 1.10))
        assert manifest.thresholds["dish_washer"] == pytest.approx(
            0.61 + 0.5 * (60.0 - 0.61))

    def test_same_seed_same_bytes(self, tmp_path):
        for sub in ("a", "b"):
            assert run(["synth", "--out", str(tmp_path / sub),
                        "--days", "0.1", "--seed", "12"]) == 0
        for fname in ("aggregate.csv", "kettle.csv", "manifest.txt"):
            assert (tmp_path / "a" / fname).read_bytes() == \
                   (tmp_path / "b" / fname).read_bytes(), fname

    def test_custom_spec_file(self, tmp_path):
        spec = tmp_path / "house.spec"
        spec.write_text(
            "days = 0.2\n"
            "sample_period = 10\n"
            "noise_sigma = 1\n"
            "appliance heater = cyclic standby=2 on=800 on_s=300 off_s=900\n"
            "appliance oven = program standby=1 per_day=4 "
            "phases=120:1500,300:400\n")
        assert run(["synth", "--out", str(tmp_path / "o"),
                    "--spec", str(spec), "--seed", "1"]) == 0
        manifest = data.load_manifest(tmp_path / "o" / "manifest.txt")
        assert set(manifest.appliances) == {"heater", "oven"}

    def test_bad_duty_kind_exits_3(self, tmp_path, capsys):
        spec = tmp_path / "bad.spec"
        spec.write_text("appliance x = toggle standby=1 on=5\n")
        assert run(["synth", "--out", str(tmp_path / "o"),
                    "--spec", str(spec)]) == 3
        assert "error[ParseError]" in capsys.readouterr().err

    def test_bad_phases_exits_3(self, tmp_path):
        spec = tmp_path / "bad.spec"
        spec.write_text("appliance x = program standby=1 per_day=2 phases=1500\n")
        assert run(["synth", "--out", str(tmp_path / "o"),
                    "--spec", str(spec)]) == 3

    def test_bad_train_frac_exits_2(self, tmp_path):
        assert run(["synth", "--out", str(tmp_path / "o"),
                    "--days", "0.1", "--train-frac", "1.5"]) == 2


class TestPreprocess:
    def test_splits_and_writes_parts(self, tmp_path):
        # build a household with one long gap in the aggregate
        src = tmp_path / "src"
        assert run(["synth", "--out", str(src), "--days", "0.2",
                    "--seed", "3"]) == 0
        agg = data.load_channel(src / "aggregate.csv", 10.0)
        values = agg.values.copy()
        values[700:705] = np.nan
        data.save_channel(src / "aggregate.csv",
                          data.ChannelSeries(10.0, agg.start_time, values))
        out = tmp_path / "parts"
        assert run(["preprocess", "--manifest", str(src / "manifest.txt"),
                    "--out", str(out), "--min-seconds", "3000"]) == 0
        report = (out / "report.txt").read_text()
        assert "parts kept: 2" in report
        for part in ("part0", "part1"):
            manifest = data.load_manifest(out / part / "manifest.txt")
            agg_part, apps = data.load_household(manifest)
            assert not np.any(np.isnan(agg_part.values))
            assert set(apps) == {"fridge", "kettle", "dish_washer"}

    def test_nothing_survives_exits_3(self, tmp_path):
        src = tmp_path / "src"
        assert run(["synth", "--out", str(src), "--days", "0.05",
                    "--seed", "3"]) == 0
        assert run(["preprocess", "--manifest", str(src / "manifest.txt"),
                    "--out", str(tmp_path / "parts")]) == 3  # < 1 day of data


class TestTrain:
    def test_writes_everything(self, house_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert run(train_args(house_dir, out)) == 0
        stdout = capsys.readouterr().out
        assert "trained kettle" in stdout
        assert "mae_watts" in stdout
        for fname in ("ckpt_kettle.npz", "train_kettle.log", "report.txt"):
            assert (out / fname).exists()

    def test_config_file_with_flag_override(self, house_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"manifest = {house_dir / 'manifest.txt'}\n"
            f"out = {tmp_path / 'run'}\n"
            "variant = sgn\ns = 8\nw = 16\nsteps = 1\nlr = 1e-3\n"
            "batch_size = 4\nseed = 5\nappliances = kettle\n")
        assert run(["train", "--config", str(cfg), "--steps", "2"]) == 0
        log = (tmp_path / "run" / "train_kettle.log").read_text()
        assert "steps 2 " in log

    def test_same_seed_byte_identical_outputs(self, house_dir, tmp_path):
        for sub in ("a", "b"):
            assert run(train_args(house_dir, tmp_path / sub)) == 0
        for fname in ("report.txt", "train_kettle.log", "overlay_kettle.svg"):
            assert (tmp_path / "a" / fname).read_bytes() == \
                   (tmp_path / "b" / fname).read_bytes(), fname

    def test_unknown_appliance_exits_3(self, house_dir, tmp_path):
        code = run(train_args(house_dir, tmp_path / "run",
                              ["--appliance", "toaster"]))
        assert code == 3

    def test_missing_manifest_exits_3(self, tmp_path):
        assert run(["train", "--manifest", str(tmp_path / "nope.txt"),
                    "--out", str(tmp_path / "o"), "--steps", "1"]) == 3

    def test_infeasible_geometry_exits_2(self, house_dir, tmp_path):
        code = run(train_args(house_dir, tmp_path / "run",
                              ["--s", "4", "--w", "2"]))
        assert code == 2


@pytest.fixture(scope="module")
def run_dir(house_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    assert run(train_args(house_dir, out)) == 0
    return out


class TestEval:
    def test_single_checkpoint(self, house_dir, run_dir, tmp_path, capsys):
        code = run(["eval", "--checkpoint", str(run_dir / "ckpt_kettle.npz"),
                    "--manifest", str(house_dir / "manifest.txt"),
                    "--out", str(tmp_path / "ev")])
        assert code == 0
        text = capsys.readouterr().out
        assert "appliance kettle" in text
        assert (tmp_path / "ev" / "report.txt").read_text() == text

    def test_eval_matches_train_report(self, house_dir, run_dir, capsys):
        code = run(["eval", "--checkpoint", str(run_dir),
                    "--manifest", str(house_dir / "manifest.txt")])
        assert code == 0
        assert capsys.readouterr().out == (run_dir / "report.txt").read_text()

    def test_empty_directory_exits_3(self, house_dir, tmp_path):
        assert run(["eval", "--checkpoint", str(tmp_path),
                    "--manifest", str(house_dir / "manifest.txt")]) == 3

    def test_missing_checkpoint_exits_3(self, house_dir, tmp_path, capsys):
        assert run(["eval", "--checkpoint", str(tmp_path / "nope.npz"),
                    "--manifest", str(house_dir / "manifest.txt")]) == 3
        assert "error[DataError]" in capsys.readouterr().err

    def test_corrupt_checkpoint_exits_3(self, house_dir, tmp_path):
        bad = tmp_path / "ckpt_x.npz"
        bad.write_bytes(b"not a checkpoint")
        assert run(["eval", "--checkpoint", str(bad),
                    "--manifest", str(house_dir / "manifest.txt")]) == 3


class TestSweep:
    def test_sweep_writes_table(self, house_dir, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = run(["sweep", "--manifest", str(house_dir / "manifest.txt"),
                    "--out", str(out), "--variant", "sgn", "--s", "16",
                    "--steps", "1", "--lr", "1e-3", "--batch-size", "4",
                    "--seed", "5", "--appliance", "kettle",
                    "--axis", "w", "--values", "0,24"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "skipped" in stdout
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "w,appliance,mae_watts"
        assert lines[1].startswith("0,,skipped")
        assert lines[2].startswith("24,kettle,")

    def test_bad_values_exit_2(self, house_dir, tmp_path):
        assert run(["sweep", "--manifest", str(house_dir / "manifest.txt"),
                    "--out", str(tmp_path / "o"), "--axis", "s",
                    "--values", "8,big"]) == 2


def test_console_script_is_wired():
    import subprocess
    proc = subprocess.run(["wattgate", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout and "sweep" in proc.stdout
