"""End-to-end checks for the train/eval/sweep orchestration layer."""

import numpy as np
import pytest

from wattgate import data, nn, pipeline, synth
from wattgate.errors import ConfigurationError, DataError, NumericalError, ParseError


@pytest.fixture(scope="module")
def house_dir(tmp_path_factory):
    """A small synthetic household on disk with a manifest."""
    out = tmp_path_factory.mktemp("house")
    household = synth.generate(synth.default_household(days=0.4), seed=9)
    data.save_channel(out / "aggregate.csv", household.aggregate)
    paths = {}
    for name, series in household.appliances.items():
        data.save_channel(out / f"{name}.csv", series)
        paths[name] = f"{name}.csv"
    n = household.aggregate.n
    manifest = data.Manifest(
        aggregate="aggregate.csv", appliances=paths, base_dir=out,
        sample_period=10.0,
        thresholds={"fridge": 49.0, "kettle": 1000.0, "dish_washer": 30.0},
        train_span=(0, 2 * n // 3), test_span=(2 * n // 3, n))
    data.save_manifest(out / "manifest.txt", manifest)
    return out


@pytest.fixture(scope="module")
def manifest(house_dir):
    return data.load_manifest(house_dir / "manifest.txt")


def tiny_config(house_dir, tmp_path, **kw):
    defaults = dict(
        manifest_path=house_dir / "manifest.txt", out_dir=tmp_path / "run",
        variant="sgn", s=8, w=16, lr=1e-3, batch_size=4, steps=5, seed=0,
        log_every=1, appliances=("kettle",))
    defaults.update(kw)
    return pipeline.RunConfig(**defaults)


class TestRunConfig:
    def test_rejects_unknown_variant(self, house_dir, tmp_path):
        with pytest.raises(ConfigurationError, match="variant"):
            tiny_config(house_dir, tmp_path, variant="resnet")

    def test_rejects_unknown_loss_mode(self, house_dir, tmp_path):
        with pytest.raises(ConfigurationError, match="loss_mode"):
            tiny_config(house_dir, tmp_path, loss_mode="triple")

    def test_rejects_negative_steps(self, house_dir, tmp_path):
        with pytest.raises(ConfigurationError, match="steps"):
            tiny_config(house_dir, tmp_path, steps=-1)

    def test_rejects_zero_batch(self, house_dir, tmp_path):
        with pytest.raises(ConfigurationError, match="batch_size"):
            tiny_config(house_dir, tmp_path, batch_size=0)


class TestConfigFile:
    def test_parse_and_relative_paths(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# comment\n"
            "manifest = house/manifest.txt\n"
            "out = results\n"
            "variant = dae\n"
            "s = 12\n"
            "w = 9\n"
            "lr = 0.01\n"
            "threshold = 22.5\n"
            "appliances = kettle fridge\n"
            "sae_periods = 1 5\n")
        cfg = pipeline.load_run_config(cfg_file)
        assert cfg.manifest_path == tmp_path / "house/manifest.txt"
        assert cfg.out_dir == tmp_path / "results"
        assert cfg.variant == "dae"
        assert (cfg.s, cfg.w) == (12, 9)
        assert cfg.lr == 0.01
        assert cfg.threshold_watts == 22.5
        assert cfg.appliances == ("kettle", "fridge")
        assert cfg.sae_periods == (1, 5)

    def test_overrides_win(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("manifest = m.txt\nout = o\nsteps = 3\nseed = 1\n")
        cfg = pipeline.load_run_config(cfg_file, {"steps": 50, "seed": None})
        assert cfg.steps == 50   # flag beats file
        assert cfg.seed == 1     # None override is ignored

    def test_unknown_key_is_parse_error(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("manifest = m\nout = o\nmomentum = 0.9\n")
        with pytest.raises(ParseError, match="line 3"):
            pipeline.load_run_config(cfg_file)

    def test_bad_integer_is_parse_error(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("manifest = m\nout = o\nsteps = many\n")
        with pytest.raises(ParseError, match="steps"):
            pipeline.load_run_config(cfg_file)

    def test_missing_manifest_key(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("out = o\n")
        with pytest.raises(ConfigurationError, match="manifest"):
            pipeline.load_run_config(cfg_file)


class TestPrepare:
    def test_sigma_comes_from_train_span_only(self, manifest):
        prepared = pipeline.prepare_appliance(manifest, "kettle", 15.0)
        agg = data.load_channel(manifest.aggregate_path(), 10.0)
        a, b = manifest.train_span
        expected = float(np.std(agg.values[a:b]))
        assert prepared.stats.sigma == pytest.approx(expected, rel=1e-12)

    def test_labels_use_raw_watts(self, manifest):
        prepared = pipeline.prepare_appliance(manifest, "kettle", 15.0)
        app = data.load_channel(manifest.appliance_path("kettle"), 10.0)
        a, b = manifest.train_span
        expected = (app.values[a:b] > 1000.0).astype(np.float64)
        assert np.array_equal(prepared.train_labels, expected)

    def test_unknown_appliance(self, manifest):
        with pytest.raises(DataError, match="toaster"):
            pipeline.prepare_appliance(manifest, "toaster", 15.0)

    def test_stats_override_rescales_test_data(self, manifest):
        base = pipeline.prepare_appliance(manifest, "kettle", 15.0)
        doubled = data.NormStats(sigma=2.0 * base.stats.sigma)
        scaled = pipeline.prepare_appliance(manifest, "kettle", 15.0, stats=doubled)
        assert np.allclose(scaled.test_agg * 2.0, base.test_agg)
        # raw truth is untouched by normalization
        assert np.array_equal(scaled.test_app_watts, base.test_app_watts)


class TestTraining:
    def test_zero_steps_checkpoints_the_init(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, steps=0)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        assert result.final_loss is None
        params, _, _, meta = nn.load_checkpoint(result.checkpoint_path)
        init_ss = np.random.SeedSequence(cfg.seed).spawn(2)[0]
        from wattgate.models import Model
        fresh = Model.create(cfg.model_config(), np.random.default_rng(init_ss))
        for name in fresh.params.names():
            assert np.array_equal(params[name].values, fresh.params[name].values)
        assert meta["appliance"] == "kettle"

    def test_same_seed_reproduces_exactly(self, house_dir, manifest, tmp_path):
        r1 = pipeline.train_appliance(
            tiny_config(house_dir, tmp_path / "a"), manifest, "kettle")
        r2 = pipeline.train_appliance(
            tiny_config(house_dir, tmp_path / "b"), manifest, "kettle")
        assert r1.final_loss == r2.final_loss
        for name in r1.model.params.names():
            assert np.array_equal(r1.model.params[name].values,
                                  r2.model.params[name].values)

    def test_different_seed_differs(self, house_dir, manifest, tmp_path):
        r1 = pipeline.train_appliance(
            tiny_config(house_dir, tmp_path / "a", seed=0), manifest, "kettle")
        r2 = pipeline.train_appliance(
            tiny_config(house_dir, tmp_path / "b", seed=1), manifest, "kettle")
        assert r1.final_loss != r2.final_loss

    def test_joint_mode_logs_both_losses(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, loss_mode="joint", steps=2)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        step, loss, l_out, l_on = result.history[-1]
        assert l_on is not None
        assert loss == pytest.approx(l_out + l_on, rel=1e-12)

    def test_output_only_mode_has_no_gate_loss(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, loss_mode="output_only", steps=2)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        assert result.history[-1][3] is None

    def test_ungated_variant_ignores_joint_mode(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, variant="seq2seq",
                          loss_mode="joint", steps=2)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        assert result.history[-1][3] is None

    def test_dae_trains(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, variant="dae", steps=2)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        assert result.final_loss is not None and np.isfinite(result.final_loss)

    def test_nonfinite_parameter_dumps_the_batch(self, house_dir, manifest,
                                                 tmp_path, monkeypatch):
        real_step = nn.adam_step

        def corrupting_step(params, state):
            real_step(params, state)
            w = params["power.conv1.kernel"]
            w.values[0, 0, 0] = 1e308   # next forward overflows

        monkeypatch.setattr(pipeline.nn, "adam_step", corrupting_step)
        cfg = tiny_config(house_dir, tmp_path, steps=5)
        with np.errstate(over="ignore"):
            with pytest.raises(NumericalError, match="diverged at step 2"):
                pipeline.train_appliance(cfg, manifest, "kettle")
        dumps = list((tmp_path / "run").glob("diverged_kettle_step2.npz"))
        assert len(dumps) == 1
        payload = np.load(dumps[0])
        assert payload["inputs"].shape == (4, 8 + 2 * 16)

    def test_log_file_one_line_per_step(self, house_dir, manifest, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, steps=4)
        pipeline.train_appliance(cfg, manifest, "kettle")
        lines = (tmp_path / "run" / "train_kettle.log").read_text().splitlines()
        assert lines[0].startswith("#")
        assert [ln.split()[1] for ln in lines[1:]] == ["1", "2", "3", "4"]


class TestEvaluation:
    def test_checkpoint_eval_matches_in_memory_eval(self, house_dir, manifest,
                                                    tmp_path):
        cfg = tiny_config(house_dir, tmp_path, steps=4)
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        prepared = pipeline.prepare_appliance(manifest, "kettle",
                                              cfg.threshold_watts,
                                              stats=result.prepared.stats)
        direct, _ = pipeline.evaluate_model(result.model, prepared,
                                            cfg.sae_periods)
        from_ckpt, _ = pipeline.evaluate_checkpoint(
            result.checkpoint_path, house_dir / "manifest.txt")
        assert from_ckpt.mae_watts == direct.mae_watts
        assert from_ckpt.sae_watts == direct.sae_watts
        assert from_ckpt.gate_interior_mass == direct.gate_interior_mass

    def test_eval_requires_metadata(self, house_dir, manifest, tmp_path):
        from wattgate.autodiff import Tensor
        params = nn.ParameterSet()
        params.add("w", Tensor(np.zeros((2, 2))))
        path = tmp_path / "bare.npz"
        nn.save_checkpoint(path, params)
        with pytest.raises(DataError, match="metadata"):
            pipeline.evaluate_checkpoint(path, house_dir / "manifest.txt")

    def test_run_training_writes_artifacts(self, house_dir, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, steps=3)
        results, report = pipeline.run_training(cfg)
        assert len(results) == 1
        assert report.appliances[0].name == "kettle"
        out = tmp_path / "run"
        for fname in ("ckpt_kettle.npz", "train_kettle.log", "report.txt",
                      "loss_kettle.svg", "overlay_kettle.svg",
                      "gate_hist_kettle.svg"):
            assert (out / fname).exists(), fname

    def test_infeasible_sae_periods_are_dropped(self, house_dir, manifest,
                                                tmp_path):
        cfg = tiny_config(house_dir, tmp_path, steps=1,
                          sae_periods=(1, 10 ** 9))
        result = pipeline.train_appliance(cfg, manifest, "kettle")
        prepared = pipeline.prepare_appliance(manifest, "kettle",
                                              cfg.threshold_watts,
                                              stats=result.prepared.stats)
        app_metrics, _ = pipeline.evaluate_model(result.model, prepared,
                                                 cfg.sae_periods)
        assert list(app_metrics.sae_watts) == [1]


class TestSweep:
    def test_sweep_skips_infeasible_and_scores_the_rest(self, house_dir, tmp_path):
        cfg = tiny_config(house_dir, tmp_path, s=16, steps=1)
        rows = pipeline.run_sweep(cfg, "w", [0, 24], out_dir=tmp_path / "sweep")
        assert rows[0][1] is None and "skipped" in rows[0][2]
        assert rows[1][:2] == (24, "kettle")
        assert np.isfinite(rows[1][2])
        csv = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
        assert csv[0] == "w,appliance,mae_watts"
        assert len(csv) == 3
        assert (tmp_path / "sweep" / "sweep.svg").exists()

    def test_bad_axis(self, house_dir, tmp_path):
        cfg = tiny_config(house_dir, tmp_path)
        with pytest.raises(ConfigurationError, match="axis"):
            pipeline.run_sweep(cfg, "lr", [1])

    def test_empty_values(self, house_dir, tmp_path):
        cfg = tiny_config(house_dir, tmp_path)
        with pytest.raises(ConfigurationError, match="at least one"):
            pipeline.run_sweep(cfg, "s", [])
