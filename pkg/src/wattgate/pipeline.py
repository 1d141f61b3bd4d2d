"""Train/eval/sweep orchestration shared by the CLI and the test suite."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import nn, plots
from .autodiff import Tape, Tensor, backward
from .errors import ConfigurationError, DataError, NumericalError, ParseError
from .models import GATED_VARIANTS, VARIANTS, Model, ModelConfig
from .models import DEFAULT_CONV_STACK

LOSS_MODES = ("joint", "output_only")
DEFAULT_SAE_PERIODS = (1, 10, 60, 600)


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs besides the data itself."""

    manifest_path: Path
    out_dir: Path
    variant: str = "sgn"
    loss_mode: str = "joint"
    s: int = 64
    w: int = 400
    threshold_watts: float = 15.0
    lr: float = 1e-4
    batch_size: int = 16
    steps: int = 1000
    seed: int = 0
    appliances: tuple[str, ...] = ()          # empty means all in the manifest
    sae_periods: tuple[int, ...] = DEFAULT_SAE_PERIODS
    log_every: int = 100
    conv_stack: tuple[tuple[int, int], ...] = DEFAULT_CONV_STACK
    dense_width: int = 1024

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(
                f"unknown loss_mode {self.loss_mode!r}; choose from {', '.join(LOSS_MODES)}")
        if self.steps < 0:
            raise ConfigurationError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.log_every < 1:
            raise ConfigurationError(f"log_every must be >= 1, got {self.log_every}")
        if not self.sae_periods:
            raise ConfigurationError("sae_periods must not be empty")

    def model_config(self) -> ModelConfig:
        return ModelConfig(variant=self.variant, s=self.s, w=self.w,
                           conv_stack=self.conv_stack, dense_width=self.dense_width)


_INT_KEYS = {"s", "w", "batch_size", "steps", "seed", "log_every", "dense_width"}
_FLOAT_KEYS = {"threshold", "lr"}


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a key = value run configuration file. Paths are resolved
    relative to the file; overrides (from CLI flags) win over file values."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e}") from None
    values: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key in ("manifest", "out"):
            values[key] = value
        elif key in ("variant", "loss_mode"):
            values[key] = value
        elif key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} must be an integer, got {value!r}",
                                 path, lineno) from None
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(value)
            except ValueError:
                raise ParseError(f"{key} must be a number, got {value!r}",
                                 path, lineno) from None
        elif key == "appliances":
            values[key] = tuple(value.split())
        elif key == "sae_periods":
            try:
                values[key] = tuple(int(v) for v in value.split())
            except ValueError:
                raise ParseError(f"sae_periods must be integers, got {value!r}",
                                 path, lineno) from None
        else:
            raise ParseError(f"unknown config key {key!r}", path, lineno)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_run_config(values, base_dir=path.parent)


def build_run_config(values: dict, base_dir: Path | None = None) -> RunConfig:
    values = dict(values)
    base = base_dir or Path(".")
    manifest = values.pop("manifest", None)
    if manifest is None:
        raise ConfigurationError("a manifest path is required")
    out = values.pop("out", None)
    if out is None:
        raise ConfigurationError("an output directory is required")
    manifest_path = Path(manifest)
    if not manifest_path.is_absolute():
        manifest_path = base / manifest_path
    out_dir = Path(out)
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    threshold = values.pop("threshold", None)
    kwargs = dict(values)
    if threshold is not None:
        kwargs["threshold_watts"] = threshold
    try:
        return RunConfig(manifest_path=manifest_path, out_dir=out_dir, **kwargs)
    except TypeError as e:
        raise ConfigurationError(f"bad configuration: {e}") from None


@dataclass
class PreparedData:
    """Per-appliance training/eval arrays, normalized where noted."""

    appliance: str
    period: float
    stats: data_mod.NormStats
    threshold: float
    train_agg: np.ndarray     # normalized
    train_app: np.ndarray     # normalized
    train_labels: np.ndarray  # {0, 1}
    test_agg: np.ndarray | None = None   # normalized with the train sigma
    test_app_watts: np.ndarray | None = None


def _select_part(manifest: data_mod.Manifest, channels):
    """Apply the manifest's preprocessing mode; with 'redd', training uses
    the longest retained part."""
    if manifest.preprocess == "redd":
        parts = data_mod.preprocess_redd_group(channels)
        if not parts:
            raise DataError("preprocessing removed all data "
                            "(gaps too frequent or parts too short)")
        return max(parts, key=lambda part: part[0].n)
    start, period, arrays = data_mod._align(channels)
    out = []
    for ch, arr in zip(channels, arrays):
        if np.any(np.isnan(arr)):
            raise DataError(
                f"channel {ch.name!r} has missing samples; set "
                f"'preprocess = redd' in the manifest to repair them")
        out.append(data_mod.ChannelSeries(period, start, arr, name=ch.name))
    return out


def prepare_appliance(manifest: data_mod.Manifest, appliance: str,
                      threshold_default: float, need_test: bool = True,
                      stats: data_mod.NormStats | None = None) -> PreparedData:
    """Load, preprocess, slice, and normalize one appliance's data.
    Pass stats to reuse a training-time scale instead of recomputing it."""
    agg_raw, apps = data_mod.load_household(manifest)
    if appliance not in apps:
        raise DataError(f"manifest has no appliance {appliance!r}; "
                        f"available: {', '.join(apps)}")
    agg, app = _select_part(manifest, [agg_raw, apps[appliance]])

    if manifest.train_span is None:
        raise ConfigurationError("manifest needs a train_span to train on")
    a, b = manifest.train_span
    if b > agg.n:
        raise DataError(f"train_span end {b} exceeds the {agg.n} available samples")
    threshold = manifest.threshold_for(appliance, threshold_default)
    if stats is None:
        stats = data_mod.compute_norm(agg.values[a:b])
    prepared = PreparedData(
        appliance=appliance,
        period=agg.sample_period,
        stats=stats,
        threshold=threshold,
        train_agg=data_mod.normalize(agg.values[a:b], stats),
        train_app=data_mod.normalize(app.values[a:b], stats),
        train_labels=data_mod.label_on_off(app.values[a:b], threshold),
    )
    if need_test:
        if manifest.test_span is None:
            raise ConfigurationError("manifest needs a test_span to evaluate on")
        ta, tb = manifest.test_span
        if tb > agg.n:
            raise DataError(f"test_span end {tb} exceeds the {agg.n} available samples")
        prepared.test_agg = data_mod.normalize(agg.values[ta:tb], stats)
        prepared.test_app_watts = agg.values[ta:tb] * 0 + app.values[ta:tb]
    return prepared


def _training_loss(model: Model, cfg: RunConfig, inputs, targets, labels):
    result = model.forward(Tensor(inputs))
    if model.config.variant == "dae":
        m = model.config.dae_filter_width - 1
        y = Tensor(targets[:, m:targets.shape[1] - m])
    else:
        y = Tensor(targets)
    l_output = nn.loss_power(y, result.output)
    if cfg.loss_mode == "joint" and model.config.variant in GATED_VARIANTS:
        l_on = nn.loss_on_logits(Tensor(labels), result.on_logits)
        total = l_output + l_on
        return total, l_output.item(), l_on.item()
    return l_output, l_output.item(), None


@dataclass
class TrainResult:
    appliance: str
    checkpoint_path: Path | None
    history: list      # (step, loss, l_output, l_on_or_None)
    final_loss: float | None
    model: Model
    prepared: PreparedData


def checkpoint_meta(cfg: RunConfig, prepared: PreparedData) -> dict:
    mc = cfg.model_config()
    return {
        "variant": mc.variant, "s": mc.s, "w": mc.w,
        "conv_stack": [list(layer) for layer in mc.conv_stack],
        "dense_width": mc.dense_width,
        "dae_filters": mc.dae_filters,
        "dae_filter_width": mc.dae_filter_width,
        "dae_hidden": mc.dae_hidden,
        "loss_mode": cfg.loss_mode,
        "appliance": prepared.appliance,
        "sigma": prepared.stats.sigma,
        "threshold_watts": prepared.threshold,
        "sample_period": prepared.period,
        "lr": cfg.lr, "steps": cfg.steps, "seed": cfg.seed,
        "batch_size": cfg.batch_size,
    }


def model_from_meta(meta: dict, params: nn.ParameterSet) -> Model:
    config = ModelConfig(
        variant=meta["variant"], s=int(meta["s"]), w=int(meta["w"]),
        conv_stack=tuple(tuple(layer) for layer in meta["conv_stack"]),
        dense_width=int(meta["dense_width"]),
        dae_filters=int(meta.get("dae_filters", 8)),
        dae_filter_width=int(meta.get("dae_filter_width", 4)),
        dae_hidden=int(meta.get("dae_hidden", 128)))
    return Model(config, params)


def train_appliance(cfg: RunConfig, manifest: data_mod.Manifest, appliance: str,
                    save: bool = True) -> TrainResult:
    """Train one model for one appliance and checkpoint it."""
    prepared = prepare_appliance(manifest, appliance, cfg.threshold_watts,
                                 need_test=False)
    n = prepared.train_agg.size
    init_ss, batch_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    model = Model.create(cfg.model_config(), np.random.default_rng(init_ss))
    adam = nn.AdamState(model.params, lr=cfg.lr)
    batch_rng = np.random.default_rng(batch_ss)

    out_dir = Path(cfg.out_dir)
    log_path = None
    if save:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / f"train_{appliance}.log"
        log_path.write_text(
            f"# variant {cfg.variant} loss_mode {cfg.loss_mode} "
            f"s {cfg.s} w {cfg.w} lr {repr(cfg.lr)} batch {cfg.batch_size} "
            f"steps {cfg.steps} seed {cfg.seed} appliance {appliance}\n")

    window_targets = prepared.train_app
    history = []
    final_loss = None
    for step in range(1, cfg.steps + 1):
        origins = data_mod.sample_origins(n, cfg.s, cfg.batch_size, batch_rng)
        inputs = data_mod.build_windows(prepared.train_agg, origins, cfg.s, cfg.w)
        if cfg.variant == "dae":
            targets = data_mod.build_windows(window_targets, origins, cfg.s, cfg.w)
        else:
            targets = data_mod.slice_windows(window_targets, origins, cfg.s)
        labels = data_mod.slice_windows(prepared.train_labels, origins, cfg.s)
        try:
            with Tape():
                total, l_out_val, l_on_val = _training_loss(
                    model, cfg, inputs, targets, labels)
                final_loss = total.item()
                backward(total)
            nn.adam_step(model.params, adam)
        except NumericalError as e:
            dump = None
            if save:
                dump = out_dir / f"diverged_{appliance}_step{step}.npz"
                np.savez(dump, inputs=inputs, targets=targets, labels=labels,
                         origins=origins, step=np.array([step]))
            where = f"; batch dumped to {dump}" if dump else ""
            raise NumericalError(
                f"training diverged at step {step}: {e}{where}") from e
        if step % cfg.log_every == 0 or step == cfg.steps:
            history.append((step, final_loss, l_out_val, l_on_val))
            if log_path is not None:
                with open(log_path, "a") as f:
                    extra = "" if l_on_val is None else f" l_on {repr(l_on_val)}"
                    f.write(f"step {step} loss {repr(final_loss)} "
                            f"l_output {repr(l_out_val)}{extra}\n")

    ckpt = None
    if save:
        ckpt = out_dir / f"ckpt_{appliance}.npz"
        nn.save_checkpoint(ckpt, model.params, adam, batch_rng,
                           meta=checkpoint_meta(cfg, prepared))
    return TrainResult(appliance=appliance, checkpoint_path=ckpt,
                       history=history, final_loss=final_loss,
                       model=model, prepared=prepared)


def evaluate_model(model: Model, prepared: PreparedData,
                   sae_periods=DEFAULT_SAE_PERIODS):
    """Reconstruct the test span and score it. Returns
    (ApplianceMetrics, Reconstruction)."""
    if prepared.test_agg is None:
        raise ConfigurationError("no test data prepared")
    rec = metrics_mod.reconstruct_predictions(model, prepared.test_agg,
                                              prepared.stats.sigma)
    if rec.covered == 0:
        raise DataError("test span shorter than one prediction window")
    truth = prepared.test_app_watts[:rec.covered]
    mae_watts = metrics_mod.mae(truth, rec.predictions_watts)
    feasible = [nd for nd in sae_periods if nd <= rec.covered]
    sae = metrics_mod.sweep_delta(truth, rec.predictions_watts, feasible)
    interior = None
    if rec.gate_probs is not None:
        interior = metrics_mod.on_prob_histogram(rec.gate_probs).interior_mass
    app_metrics = metrics_mod.ApplianceMetrics(
        name=prepared.appliance, samples=rec.covered, mae_watts=mae_watts,
        sae_watts=sae, gate_interior_mass=interior)
    return app_metrics, rec


def run_training(cfg: RunConfig) -> tuple[list[TrainResult], metrics_mod.MetricsReport]:
    """Train every requested appliance, then evaluate each on the test
    span. Writes checkpoints, logs, a metrics report, and plots."""
    manifest = data_mod.load_manifest(cfg.manifest_path)
    names = list(cfg.appliances) if cfg.appliances else list(manifest.appliances)
    results = []
    all_metrics = []
    out_dir = Path(cfg.out_dir)
    for name in names:
        result = train_appliance(cfg, manifest, name)
        results.append(result)
        if manifest.test_span is not None:
            prepared = prepare_appliance(manifest, name, cfg.threshold_watts,
                                         stats=result.prepared.stats)
            result.prepared = prepared
            app_metrics, rec = evaluate_model(result.model, prepared, cfg.sae_periods)
            all_metrics.append(app_metrics)
            _write_eval_artifacts(out_dir, name, prepared, rec)
        if result.history:
            steps = [h[0] for h in result.history]
            losses = [h[1] for h in result.history]
            plots.line_plot(out_dir / f"loss_{name}.svg",
                            [("loss", steps, losses)],
                            title=f"training loss: {name}",
                            x_label="step", y_label="loss")
    report = metrics_mod.MetricsReport(appliances=all_metrics)
    if all_metrics:
        (out_dir / "report.txt").write_text(report.to_text())
    return results, report


def _write_eval_artifacts(out_dir: Path, name: str, prepared: PreparedData,
                          rec: metrics_mod.Reconstruction):
    out_dir.mkdir(parents=True, exist_ok=True)
    show = min(rec.covered, 2000)
    idx = np.arange(show)
    truth = prepared.test_app_watts[:show]
    plots.line_plot(
        out_dir / f"overlay_{name}.svg",
        [("truth", idx, truth), ("prediction", idx, rec.predictions_watts[:show])],
        title=f"test-span overlay: {name}", x_label="sample", y_label="watts")
    if rec.gate_probs is not None:
        h = metrics_mod.on_prob_histogram(rec.gate_probs)
        plots.histogram_plot(
            out_dir / f"gate_hist_{name}.svg", h.edges, h.counts,
            title=f"gate probabilities: {name}", x_label="on probability")


def evaluate_checkpoint(checkpoint_path, manifest_path, out_dir=None,
                        sae_periods=DEFAULT_SAE_PERIODS):
    """Score a saved model against the manifest's test span."""
    params, _, _, meta = nn.load_checkpoint(checkpoint_path)
    if not meta or "variant" not in meta:
        raise DataError(f"{checkpoint_path}: checkpoint lacks model metadata")
    model = model_from_meta(meta, params)
    manifest = data_mod.load_manifest(manifest_path)
    # Evaluation must reuse the training-time scale, not recompute it.
    stats = data_mod.NormStats(sigma=float(meta["sigma"]))
    prepared = prepare_appliance(manifest, meta["appliance"],
                                 meta.get("threshold_watts", 15.0), stats=stats)
    app_metrics, rec = evaluate_model(model, prepared, sae_periods)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_eval_artifacts(out_dir, prepared.appliance, prepared, rec)
    return app_metrics, rec


def run_sweep(cfg: RunConfig, axis: str, values, out_dir=None):
    """Retrain across a grid of window geometries; infeasible geometries
    are reported as skipped rather than aborting the sweep."""
    if axis not in ("s", "w"):
        raise ConfigurationError(f"sweep axis must be 's' or 'w', got {axis!r}")
    values = [int(v) for v in values]
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = data_mod.load_manifest(cfg.manifest_path)
    names = list(cfg.appliances) if cfg.appliances else list(manifest.appliances)

    rows = []
    curves = {name: ([], []) for name in names}
    for value in values:
        try:
            sub_cfg = replace(cfg, **{axis: value},
                              out_dir=out_dir / f"{axis}{value}")
            sub_cfg.model_config()
        except ConfigurationError as e:
            rows.append((value, None, f"skipped: {e}"))
            continue
        for name in names:
            result = train_appliance(sub_cfg, manifest, name, save=False)
            prepared = prepare_appliance(manifest, name, cfg.threshold_watts)
            app_metrics, _ = evaluate_model(result.model, prepared, cfg.sae_periods)
            rows.append((value, name, app_metrics.mae_watts))
            curves[name][0].append(value)
            curves[name][1].append(app_metrics.mae_watts)

    csv_path = out_dir / "sweep.csv"
    lines = [f"{axis},appliance,mae_watts"]
    for value, name, mae_or_msg in rows:
        if name is None:
            lines.append(f"{value},,{mae_or_msg}")
        else:
            lines.append(f"{value},{name},{repr(mae_or_msg)}")
    csv_path.write_text("\n".join(lines) + "\n")

    series = [(name, np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
              for name, (xs, ys) in curves.items() if xs]
    if series:
        plots.line_plot(out_dir / "sweep.svg", series,
                        title=f"mae vs {axis}", x_label=axis, y_label="mae (watts)")
    return rows
