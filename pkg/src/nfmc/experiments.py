"""Built-in experiments, their JSON configs and the run artifacts.

A run is configured by one JSON document (defaults below reproduce the
reference settings of each experiment), executes initialization +
``sample_train`` + evidence estimation, and leaves five files in
``output_dir``:

* ``chains.csv``   - iter,walker,theta_0..theta_{d-1}, original coordinates
* ``metrics.csv``  - iter,loss,nf_acc_rate,langevin_acc_rate
* ``evidence.json``- final estimate, per-mode log masses, checkpoints
* ``flow.json``    - the trained flow
* ``manifest.json``- resolved config, version, wall clock, file checksums,
                     whitening transform; written last

All floats are written with 17 significant digits so every value parses
back to the double that produced it.  Files are written to a temp name and
renamed, so no artifact is ever left half-written.

Random streams are keyed as SeedSequence([master_seed, tag, ...]) with
tag 1 = data generation, 2 = initializer, 3 = flow init, 4 = walker
streams (one per walker), 5 = evidence draws.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .estimators import (
    ModeIndicator,
    WeightedSamples,
    evidence_estimate,
    importance_weights,
    mode_log_mass,
)
from .flow import RealNvpFlow, build_realnvp
from .targets import (
    GaussianMixtureTarget,
    GaussianTarget,
    RadialVelocityTarget,
    RvDataset,
    RvPriorConfig,
    joker_initialize,
    rv_generate_observations,
)
from .trainer import RunMetrics, TrainConfig, sample_train
from .whitening import WhiteningTransform, build_whitening, whitened_target

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "default_config",
    "load_config_file",
    "apply_overrides",
    "validate_config",
    "run_experiment",
    "estimate_evidence",
]

EXPERIMENTS = ("mixture", "radial_velocity", "custom_gaussian_smoke")

DATA_TAG = 1
INIT_TAG = 2
FLOW_TAG = 3
EVIDENCE_TAG = 5


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


def default_config(experiment: str) -> dict:
    """The full default config of one experiment."""
    if experiment == "mixture":
        center_a = [8.0, 3.0] + [0.0] * 8
        center_b = [-2.0, 3.0] + [0.0] * 8
        return {
            "experiment": "mixture",
            "master_seed": 0,
            "output_dir": "runs/mixture",
            "target": {
                "dim": 10,
                "weight_a": 2.0 / 3.0,
                "weight_b": 1.0 / 3.0,
                "center_a": center_a,
                "center_b": center_b,
            },
            "flow": {
                "num_pairs": 6,
                "hidden_widths": [100, 100, 100],
                # 0.01 starts the conditioner trunks in a vanishing-signal
                # regime that stalls the fit around 30% NF acceptance; 0.1
                # keeps the map near the identity but trains to ~80%
                "init_scale": 0.1,
                "scale_clamp": 5.0,
            },
            "train": {
                "tau": 0.005,
                "k_max": 4000,
                "k_lang": 1,
                "learning_rate": 0.005,
                "n_walkers": 100,
                "buffer_len": 10,
                "update_stride": 10,
                "langevin_mode": "ula",
            },
            "evidence": {
                "n_samples": 100000,
                "checkpoint_stride": 200,
                "checkpoint_samples": 10000,
                "mode_radius": 5.0,
            },
        }
    if experiment == "radial_velocity":
        return {
            "experiment": "radial_velocity",
            "master_seed": 0,
            "output_dir": "runs/radial_velocity",
            "target": {
                "prior": {
                    "ln_P_min": 3.0,
                    "ln_P_max": 5.0,
                    "mu_K": 5.0,
                    "sigma_K": 3.0,
                    "sigma_v0": 1.0,
                    "sigma_obs": 1.8,
                },
                "data_csv": None,
                "truth": [0.0, 5.0, 1.0, 4.0],
                "n_obs": 6,
                "time_span": 2.0 * math.exp(5.0),
            },
            "init": {
                "joker_draws": 1000,
                "eigenvalue_floor": None,
            },
            "flow": {
                "num_pairs": 6,
                "hidden_widths": [100, 100, 100],
                "init_scale": 0.1,
                "scale_clamp": 5.0,
            },
            "train": {
                "tau": 5e-6,
                "k_max": 10000,
                "k_lang": 1,
                "learning_rate": 0.001,
                "n_walkers": 110,
                "buffer_len": 5,
                "update_stride": 5,
                "langevin_mode": "ula",
            },
            "evidence": {
                "n_samples": 100000,
                "checkpoint_stride": 200,
                "checkpoint_samples": 10000,
            },
        }
    if experiment == "custom_gaussian_smoke":
        return {
            "experiment": "custom_gaussian_smoke",
            "master_seed": 0,
            "output_dir": "runs/smoke",
            "target": {"dim": 2, "log_offset": 0.0},
            "flow": {
                "num_pairs": 2,
                "hidden_widths": [16, 16],
                "init_scale": 0.01,
                "scale_clamp": 5.0,
            },
            "train": {
                "tau": 0.05,
                "k_max": 50,
                "k_lang": 1,
                "learning_rate": 0.001,
                "n_walkers": 10,
                "buffer_len": 5,
                "update_stride": 1,
                "langevin_mode": "ula",
            },
            "evidence": {
                "n_samples": 1000,
                "checkpoint_stride": 0,
                "checkpoint_samples": 1000,
            },
        }
    raise ConfigError("experiment", f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")


def _deep_merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key in base and isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, prefix=path + ".")
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    """Read user JSON and fill unspecified entries from the defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config", "top-level JSON value must be an object")
    experiment = user.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {experiment!r}")
    return _deep_merge(default_config(experiment), user)


def apply_overrides(config: dict, assignments: list[str]) -> dict:
    """Apply ``--set path.to.key=value`` overrides; values parse as JSON."""
    config = json.loads(json.dumps(config))
    for item in assignments:
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("--set", f"empty key in {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(key, "no such config section")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(key, "no such config entry")
        node[parts[-1]] = value
    return config


def _as_int(cfg: dict, block: str, key: str, minimum: int | None = None) -> int:
    value = cfg.get(key)
    field = f"{block}.{key}" if block else key
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}")
    return value


def _as_float(cfg: dict, block: str, key: str, positive: bool = False) -> float:
    value = cfg.get(key)
    field = f"{block}.{key}" if block else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"must be a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(field, "must be finite")
    if positive and not value > 0:
        raise ConfigError(field, f"must be > 0, got {value}")
    return value


def _as_vector(cfg: dict, block: str, key: str, length: int | None = None) -> list[float]:
    value = cfg.get(key)
    field = f"{block}.{key}" if block else key
    if not isinstance(value, list) or not value:
        raise ConfigError(field, "must be a nonempty list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(float(v)):
            raise ConfigError(field, f"must contain finite numbers, got {v!r}")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise ConfigError(field, f"must have length {length}, got {len(out)}")
    return out


def _check_keys(block: dict, allowed: set[str], block_name: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        name = sorted(unknown)[0]
        field = f"{block_name}.{name}" if block_name else name
        raise ConfigError(field, "unknown config entry")


def validate_config(config: dict) -> None:
    """Full validation; raises ConfigError naming the offending field."""
    if not isinstance(config, dict):
        raise ConfigError("config", "must be a JSON object")
    experiment = config.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {experiment!r}")
    top_keys = {"experiment", "master_seed", "output_dir", "target", "flow", "train", "evidence"}
    if experiment == "radial_velocity":
        top_keys.add("init")
    _check_keys(config, top_keys, "")

    seed = _as_int(config, "", "master_seed", minimum=0)
    if seed >= 2**63:
        raise ConfigError("master_seed", "must be < 2**63")
    if not isinstance(config.get("output_dir"), str) or not config["output_dir"]:
        raise ConfigError("output_dir", "must be a nonempty string")

    for block_name in ("target", "flow", "train", "evidence"):
        if not isinstance(config.get(block_name), dict):
            raise ConfigError(block_name, "must be a config section")

    flow = config["flow"]
    _check_keys(flow, {"num_pairs", "hidden_widths", "init_scale", "scale_clamp"}, "flow")
    _as_int(flow, "flow", "num_pairs", minimum=1)
    widths = flow.get("hidden_widths")
    if not isinstance(widths, list) or not widths or not all(
        isinstance(w, int) and not isinstance(w, bool) and w >= 1 for w in widths
    ):
        raise ConfigError("flow.hidden_widths", "must be a nonempty list of integers >= 1")
    _as_float(flow, "flow", "init_scale", positive=True)
    if flow.get("scale_clamp") is not None:
        _as_float(flow, "flow", "scale_clamp", positive=True)

    train = config["train"]
    _check_keys(
        train,
        {
            "tau",
            "k_max",
            "k_lang",
            "learning_rate",
            "n_walkers",
            "buffer_len",
            "update_stride",
            "langevin_mode",
        },
        "train",
    )
    _as_float(train, "train", "tau", positive=True)
    _as_int(train, "train", "k_max", minimum=0)
    _as_int(train, "train", "k_lang", minimum=0)
    _as_float(train, "train", "learning_rate", positive=True)
    _as_int(train, "train", "n_walkers", minimum=1)
    _as_int(train, "train", "buffer_len", minimum=1)
    _as_int(train, "train", "update_stride", minimum=1)
    if train.get("langevin_mode") not in ("ula", "mala"):
        raise ConfigError("train.langevin_mode", f"must be 'ula' or 'mala', got {train.get('langevin_mode')!r}")

    evidence = config["evidence"]
    allowed_ev = {"n_samples", "checkpoint_stride", "checkpoint_samples"}
    if experiment == "mixture":
        allowed_ev.add("mode_radius")
    _check_keys(evidence, allowed_ev, "evidence")
    _as_int(evidence, "evidence", "n_samples", minimum=1)
    _as_int(evidence, "evidence", "checkpoint_stride", minimum=0)
    _as_int(evidence, "evidence", "checkpoint_samples", minimum=1)

    target = config["target"]
    if experiment == "mixture":
        _check_keys(target, {"dim", "weight_a", "weight_b", "center_a", "center_b"}, "target")
        dim = _as_int(target, "target", "dim", minimum=2)
        wa = _as_float(target, "target", "weight_a", positive=True)
        wb = _as_float(target, "target", "weight_b", positive=True)
        if abs(wa + wb - 1.0) > 1e-12:
            raise ConfigError("target.weight_b", "weights must sum to 1")
        _as_vector(target, "target", "center_a", length=dim)
        _as_vector(target, "target", "center_b", length=dim)
        _as_float(evidence, "evidence", "mode_radius", positive=True)
    elif experiment == "radial_velocity":
        _check_keys(target, {"prior", "data_csv", "truth", "n_obs", "time_span"}, "target")
        prior = target.get("prior")
        if not isinstance(prior, dict):
            raise ConfigError("target.prior", "must be a config section")
        _check_keys(prior, {"ln_P_min", "ln_P_max", "mu_K", "sigma_K", "sigma_v0", "sigma_obs"}, "target.prior")
        ln_min = _as_float(prior, "target.prior", "ln_P_min")
        ln_max = _as_float(prior, "target.prior", "ln_P_max")
        if not ln_min < ln_max:
            raise ConfigError("target.prior.ln_P_max", "must be > ln_P_min")
        _as_float(prior, "target.prior", "mu_K")
        _as_float(prior, "target.prior", "sigma_K", positive=True)
        _as_float(prior, "target.prior", "sigma_v0", positive=True)
        _as_float(prior, "target.prior", "sigma_obs", positive=True)
        if target.get("data_csv") is not None and not isinstance(target["data_csv"], str):
            raise ConfigError("target.data_csv", "must be null or a file path string")
        if target.get("data_csv") is None:
            _as_vector(target, "target", "truth", length=4)
            _as_int(target, "target", "n_obs", minimum=1)
            _as_float(target, "target", "time_span", positive=True)
        init = config.get("init")
        if not isinstance(init, dict):
            raise ConfigError("init", "must be a config section")
        _check_keys(init, {"joker_draws", "eigenvalue_floor"}, "init")
        _as_int(init, "init", "joker_draws", minimum=2)
        if init.get("eigenvalue_floor") is not None:
            _as_float(init, "init", "eigenvalue_floor", positive=True)
    else:
        _check_keys(target, {"dim", "log_offset"}, "target")
        _as_int(target, "target", "dim", minimum=2)
        _as_float(target, "target", "log_offset")


# ----------------------------------------------------------------------
# experiment setup
# ----------------------------------------------------------------------


class ExperimentSetup:
    """Everything needed to run one experiment.

    ``work_target`` is what the samplers and flow see (whitened for the
    radial-velocity case); ``transform`` maps whitened coordinates back to
    the original parameters (identity when no whitening is used).
    """

    def __init__(self, target, work_target, transform, initial_positions, modes, manifest_extra):
        self.target = target
        self.work_target = work_target
        self.transform = transform
        self.initial_positions = initial_positions
        self.modes = modes
        self.manifest_extra = manifest_extra

    @property
    def dim(self) -> int:
        return self.target.dim


def _tag_rng(master_seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *tags]))


def _derived_seed(master_seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), tag]).generate_state(1, dtype=np.uint64)[0])


def prepare_experiment(config: dict) -> ExperimentSetup:
    experiment = config["experiment"]
    seed = config["master_seed"]
    n_walkers = config["train"]["n_walkers"]

    if experiment == "mixture":
        t = config["target"]
        target = GaussianMixtureTarget(t["weight_a"], t["weight_b"], t["center_a"], t["center_b"])
        transform = WhiteningTransform.identity(target.dim)
        # equal shares, exactly at the two centers
        n_a = n_walkers - n_walkers // 2
        positions = np.empty((n_walkers, target.dim))
        positions[:n_a] = np.asarray(t["center_a"], dtype=float)
        positions[n_a:] = np.asarray(t["center_b"], dtype=float)
        radius = config["evidence"]["mode_radius"]
        modes = (
            ModeIndicator(np.asarray(t["center_a"], dtype=float), radius),
            ModeIndicator(np.asarray(t["center_b"], dtype=float), radius),
        )
        return ExperimentSetup(target, target, transform, positions, modes, {})

    if experiment == "radial_velocity":
        t = config["target"]
        prior = RvPriorConfig(**t["prior"])
        if t["data_csv"] is not None:
            try:
                dataset = RvDataset.from_csv(Path(t["data_csv"]).read_text())
            except OSError as exc:
                raise ConfigError("target.data_csv", f"cannot read: {exc}") from exc
        else:
            data_rng = _tag_rng(seed, DATA_TAG)
            times = np.sort(data_rng.uniform(0.0, t["time_span"], size=t["n_obs"]))
            dataset = rv_generate_observations(t["truth"], times, prior.sigma_obs, data_rng)
        target = RadialVelocityTarget(dataset, prior)

        init_cfg = config["init"]
        joker_rng = _tag_rng(seed, INIT_TAG)
        try:
            starts = joker_initialize(dataset, prior, init_cfg["joker_draws"], joker_rng)
        except ValueError as exc:
            raise ConfigError("init.joker_draws", str(exc)) from exc
        if len(starts) < 2:
            raise ConfigError(
                "init.joker_draws",
                f"only {len(starts)} initializer sample(s) accepted; whitening needs at least 2",
            )
        starts = np.stack(starts)
        transform = build_whitening(starts, init_cfg["eigenvalue_floor"])
        work_target = whitened_target(target, transform)
        # round-robin copies of the accepted starts fill the ensemble
        originals = starts[np.arange(n_walkers) % starts.shape[0]]
        positions = transform.to_whitened(originals)
        extra = {
            "rv_dataset": {"times": dataset.times.tolist(), "velocities": dataset.velocities.tolist()},
            "joker_accepted": int(starts.shape[0]),
            "joker_samples": starts.tolist(),
        }
        return ExperimentSetup(target, work_target, transform, positions, None, extra)

    t = config["target"]
    target = GaussianTarget(t["dim"], t["log_offset"])
    transform = WhiteningTransform.identity(target.dim)
    positions = np.zeros((n_walkers, target.dim))
    return ExperimentSetup(target, target, transform, positions, None, {})


def build_flow_from_config(config: dict) -> RealNvpFlow:
    f = config["flow"]
    dims = {
        "mixture": lambda: config["target"]["dim"],
        "radial_velocity": lambda: 4,
        "custom_gaussian_smoke": lambda: config["target"]["dim"],
    }
    return build_realnvp(
        dim=dims[config["experiment"]](),
        num_pairs=f["num_pairs"],
        hidden_widths=tuple(f["hidden_widths"]),
        seed=_derived_seed(config["master_seed"], FLOW_TAG),
        init_scale=f["init_scale"],
        scale_clamp=f["scale_clamp"],
    )


def train_config_from(config: dict) -> TrainConfig:
    t = config["train"]
    return TrainConfig(
        tau=t["tau"],
        k_max=t["k_max"],
        k_lang=t["k_lang"],
        learning_rate=t["learning_rate"],
        n_walkers=t["n_walkers"],
        buffer_len=t["buffer_len"],
        update_stride=t["update_stride"],
        langevin_mode=t["langevin_mode"],
        master_seed=config["master_seed"],
    )


# ----------------------------------------------------------------------
# artifact writers
# ----------------------------------------------------------------------


def _atomic_write(path: Path, writer: Callable) -> None:
    """Write via a temp file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            writer(handle)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write(path, lambda handle: handle.write(text))


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_chains_csv(path: Path, history_original: np.ndarray) -> None:
    """iter,walker,theta_0..theta_{d-1}; one block per stored iteration."""
    n_iters, n_walkers, dim = history_original.shape
    header = "iter,walker," + ",".join(f"theta_{j}" for j in range(dim))

    def writer(handle):
        handle.write(header + "\n")
        for k in range(n_iters):
            block = history_original[k]
            for w in range(n_walkers):
                coords = ",".join(f"{v:.17g}" for v in block[w])
                handle.write(f"{k},{w},{coords}\n")

    _atomic_write(path, writer)


def write_metrics_csv(path: Path, metrics: RunMetrics) -> None:
    def writer(handle):
        handle.write("iter,loss,nf_acc_rate,langevin_acc_rate\n")
        for r in metrics.records:
            handle.write(
                f"{r.iteration},{r.loss:.17g},{r.nf_acc_rate:.17g},{r.langevin_acc_rate:.17g}\n"
            )

    _atomic_write(path, writer)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ----------------------------------------------------------------------
# runners
# ----------------------------------------------------------------------


def _evidence_payload(flow, setup: ExperimentSetup, count: int, rng) -> tuple[dict, object]:
    samples = importance_weights(flow, setup.work_target, count, rng)
    est = evidence_estimate(samples)
    payload = {
        "log_z_hat": est.log_z_hat,
        "z_hat": est.z_hat,
        "std_error": est.std_error,
        "n_eff": est.n_eff,
        "n": est.n,
    }
    if setup.modes is not None:
        originals = setup.transform.to_original(samples.thetas)
        in_original = WeightedSamples(originals, samples.log_weights)
        mass_a = mode_log_mass(in_original, setup.modes[0], label="mode A")
        mass_b = mode_log_mass(in_original, setup.modes[1], label="mode B")
        payload["log_mass_a"] = mass_a
        payload["log_mass_b"] = mass_b
        payload["log_evidence_difference"] = mass_a - mass_b
    return payload, est


def run_experiment(config: dict, log: Callable[[str], None] = print) -> dict:
    """Execute one configured run; returns the evidence payload.

    Raises ConfigError for bad configs and NonFiniteLossError (with
    diagnostics attached) when training aborts.
    """
    validate_config(config)
    start = time.time()
    seed = config["master_seed"]
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    setup = prepare_experiment(config)
    flow = build_flow_from_config(config)
    train_cfg = train_config_from(config)
    ev_cfg = config["evidence"]

    checkpoints: list[dict] = []
    stride = ev_cfg["checkpoint_stride"]

    def hook(k: int, fl, ensemble) -> None:
        if stride and (k + 1) % stride == 0:
            rng = _tag_rng(seed, EVIDENCE_TAG, k + 1)
            payload, est = _evidence_payload(fl, setup, ev_cfg["checkpoint_samples"], rng)
            payload["iteration"] = k + 1
            checkpoints.append(payload)
            log(
                f"[{config['experiment']}] iter {k + 1}/{train_cfg.k_max}: "
                f"log_z_hat={est.log_z_hat:.4f} n_eff={est.n_eff:.1f}"
            )

    history, flow, metrics = sample_train(
        train_cfg, setup.work_target, flow, setup.initial_positions, checkpoint_hook=hook
    )

    final_rng = _tag_rng(seed, EVIDENCE_TAG)
    evidence, est = _evidence_payload(flow, setup, ev_cfg["n_samples"], final_rng)
    evidence["checkpoints"] = checkpoints
    log(
        f"[{config['experiment']}] final: log_z_hat={est.log_z_hat:.4f} "
        f"std_error={est.std_error:.3g} n_eff={est.n_eff:.1f} of n={est.n}"
    )

    flat = history.reshape(-1, setup.dim)
    history_original = setup.transform.to_original(flat).reshape(history.shape)

    write_chains_csv(out_dir / "chains.csv", history_original)
    write_metrics_csv(out_dir / "metrics.csv", metrics)
    _atomic_write_text(out_dir / "evidence.json", _json_text(evidence))
    _atomic_write_text(out_dir / "flow.json", _json_text(flow.to_json_dict()))

    inventory = {
        name: _sha256(out_dir / name)
        for name in ("chains.csv", "metrics.csv", "evidence.json", "flow.json")
    }
    manifest = {
        "config": config,
        "version": __version__,
        "wall_clock_seconds": time.time() - start,
        "files": inventory,
        "whitening": setup.transform.to_json_dict(),
        **setup.manifest_extra,
    }
    _atomic_write_text(out_dir / "manifest.json", _json_text(manifest))
    return evidence


def write_diagnostics(output_dir, diagnostics: dict) -> Path:
    """Persist an abort snapshot next to the other artifacts."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "diagnostics.json"
    _atomic_write_text(path, _json_text(diagnostics))
    return path


def estimate_evidence(
    config: dict, flow_path, n_samples: int, log: Callable[[str], None] = print
) -> dict:
    """Standalone evidence re-estimation from a serialized flow.

    Rebuilds the target (and, for the radial-velocity experiment, the
    whitening transform) deterministically from the config, so the flow is
    evaluated in the same coordinates it was trained in.  Writes
    evidence.json into the config's output_dir.
    """
    validate_config(config)
    if n_samples < 1:
        raise ConfigError("n_samples", f"must be >= 1, got {n_samples}")
    try:
        flow_data = json.loads(Path(flow_path).read_text())
    except OSError as exc:
        raise ConfigError("flow", f"cannot read {flow_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("flow", f"invalid JSON in {flow_path}: {exc}") from exc
    flow = RealNvpFlow.from_json_dict(flow_data)

    setup = prepare_experiment(config)
    if flow.dim != setup.dim:
        raise ConfigError("flow", f"flow dim {flow.dim} does not match target dim {setup.dim}")

    rng = _tag_rng(config["master_seed"], EVIDENCE_TAG)
    evidence, est = _evidence_payload(flow, setup, n_samples, rng)
    evidence["checkpoints"] = []
    log(
        f"[evidence] log_z_hat={est.log_z_hat:.4f} std_error={est.std_error:.3g} "
        f"n_eff={est.n_eff:.1f} of n={est.n}"
    )
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "evidence.json", _json_text(evidence))
    return evidence
