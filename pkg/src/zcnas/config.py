"""Experiment configuration: one JSON file drives the whole pipeline.

Every randomness source has its own named seed and there are no
wall-clock defaults, so a config file pins the experiment completely.

Example:

    {
      "experiment_id": "demo",
      "output_dir": "experiments",
      "dataset": {"synthetic": {"k_classes": 6, "n_users": 10,
                                 "duration_s": 120, "jitter": 0.05}},
      "search_space": {"sample_count": 40, "num_classes": 6},
      "train": {"epochs": 10, "lr": 0.0001, "batch_size": 256,
                "lr_decay": 0.8, "decay_every": 10},
      "proxies": ["grad_norm", "snip", "..."],
      "seeds": {"sampler": 1, "init": 2, "data": 3, "score_batch": 4,
                "train": 5, "noise": 6, "eval": 7},
      "score_batch_size": 256,
      "noise_variances": [0.0, 0.001, 0.01, 0.05, 0.5],
      "random_search_trials": 1000,
      "jobs": 1
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .arch import SearchSpaceConfig
from .train import TrainConfig

SEED_NAMES = ("sampler", "init", "data", "score_batch", "train", "noise", "eval")
DEFAULT_NOISE_VARIANCES = (0.0, 0.001, 0.01, 0.05, 0.5)


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    manifest: Path | None = None
    synthetic: dict | None = None

    def validate(self, base_dir: Path) -> None:
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("dataset must name exactly one of 'manifest' or 'synthetic'")
        if self.manifest is not None:
            path = self.manifest if self.manifest.is_absolute() else base_dir / self.manifest
            if not path.exists():
                raise ConfigError(f"dataset manifest not found: {path}")
        else:
            for key in ("k_classes", "n_users", "duration_s"):
                if key not in self.synthetic:
                    raise ConfigError(f"dataset.synthetic missing {key!r}")


@dataclass
class ExperimentConfig:
    experiment_id: str
    dataset: DatasetConfig
    search_space: SearchSpaceConfig
    train: TrainConfig
    proxies: tuple[str, ...]
    seeds: dict[str, int]
    score_batch_size: int = 256
    output_dir: Path = Path("experiments")
    noise_variances: tuple[float, ...] = DEFAULT_NOISE_VARIANCES
    random_search_trials: int = 1000
    jobs: int = 1
    base_dir: Path = Path(".")

    @property
    def experiment_dir(self) -> Path:
        root = self.output_dir if self.output_dir.is_absolute() \
            else self.base_dir / self.output_dir
        return root / self.experiment_id

    def manifest_path(self) -> Path | None:
        if self.dataset.manifest is None:
            return None
        m = self.dataset.manifest
        return m if m.is_absolute() else self.base_dir / m


def load_config(path: str | Path, experiment_id: str | None = None,
                jobs: int | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config file. CLI-provided experiment id
    and job count override the file's values."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    exp_id = experiment_id or raw.get("experiment_id")
    if not exp_id:
        raise ConfigError("no experiment id: set 'experiment_id' in the config "
                          "or pass --experiment")
    if "/" in exp_id or exp_id.startswith("."):
        raise ConfigError(f"experiment id {exp_id!r} must be a plain directory name")

    if "seeds" not in raw:
        raise ConfigError("config missing 'seeds'")
    seeds = raw["seeds"]
    for name in SEED_NAMES:
        if name not in seeds:
            raise ConfigError(f"seeds missing {name!r} (all of {', '.join(SEED_NAMES)} "
                              "must be explicit)")
        if not isinstance(seeds[name], int) or isinstance(seeds[name], bool):
            raise ConfigError(f"seed {name!r} must be an integer")

    if "dataset" not in raw:
        raise ConfigError("config missing 'dataset'")
    ds_raw = raw["dataset"]
    dataset = DatasetConfig(
        manifest=Path(ds_raw["manifest"]) if "manifest" in ds_raw else None,
        synthetic=ds_raw.get("synthetic"),
    )
    base_dir = path.parent
    dataset.validate(base_dir)

    try:
        search_space = SearchSpaceConfig.from_dict(raw.get("search_space", {}))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad search_space: {exc}")

    train_raw = dict(raw.get("train", {}))
    train_raw.pop("seed", None)       # per-run seeds derive from seeds.train
    try:
        train_cfg = TrainConfig(**train_raw)
        train_cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train settings: {exc}")

    from .proxies import COMPONENT_PROXIES
    proxies = tuple(raw.get("proxies", COMPONENT_PROXIES))
    unknown = [p for p in proxies if p not in COMPONENT_PROXIES]
    if unknown:
        raise ConfigError(f"unknown proxies: {', '.join(unknown)}")
    if not proxies:
        raise ConfigError("proxy list is empty")

    if dataset.synthetic is not None:
        if int(dataset.synthetic["k_classes"]) != search_space.num_classes:
            raise ConfigError(
                f"dataset.synthetic.k_classes={dataset.synthetic['k_classes']} does not "
                f"match search_space.num_classes={search_space.num_classes}")

    variances = tuple(float(v) for v in raw.get("noise_variances", DEFAULT_NOISE_VARIANCES))
    if any(v < 0 for v in variances):
        raise ConfigError("noise variances must be non-negative")

    cfg = ExperimentConfig(
        experiment_id=exp_id,
        dataset=dataset,
        search_space=search_space,
        train=train_cfg,
        proxies=proxies,
        seeds={k: int(v) for k, v in seeds.items()},
        score_batch_size=int(raw.get("score_batch_size", 256)),
        output_dir=Path(raw.get("output_dir", "experiments")),
        noise_variances=variances,
        random_search_trials=int(raw.get("random_search_trials", 1000)),
        jobs=jobs if jobs is not None else int(raw.get("jobs", 1)),
        base_dir=base_dir,
    )
    if cfg.score_batch_size < 1 or cfg.random_search_trials < 1 or cfg.jobs < 1:
        raise ConfigError("score_batch_size, random_search_trials and jobs must be positive")
    return cfg
