"""Flat ``key = value`` experiment configuration files.

One file drives the whole pipeline (synthesis, preprocessing, training,
evaluation).  Lines starting with ``#`` and trailing ``#`` comments are
ignored; unknown keys are errors so typos fail fast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from .cohort import PreprocessConfig, SynthConfig
from .errors import ConfigError
from .optimizer import TrainConfig

_KNOWN_KEYS = {
    "synth.subjects", "synth.biomarkers", "synth.visits", "synth.noise",
    "synth.missing_rate", "synth.seed", "synth.classes",
    "labels", "visit_indices", "use_ref_volume", "min_visits",
    "split.val", "split.test", "split.seed",
    "train.epochs", "train.alpha", "train.mu", "train.gamma",
    "train.init_seed", "train.init_range", "train.eval_every",
    "missing_strategy", "lda.ridge",
}


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = SynthConfig()
    prep: PreprocessConfig = PreprocessConfig()
    train: TrainConfig = TrainConfig()
    labels: Optional[Tuple[str, ...]] = None
    label_merge: Dict[str, str] = field(default_factory=dict)
    missing_strategy: str = "masked"
    lda_ridge: Optional[float] = None


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse flat key = value lines into a raw string mapping."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _to_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _to_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _to_bool(key: str, value: str) -> bool:
    if value.lower() in ("true", "yes", "1"):
        return True
    if value.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {value!r}")


def config_from_mapping(raw: Dict[str, str]) -> ExperimentConfig:
    label_merge: Dict[str, str] = {}
    outlier_ranges: Dict[str, Tuple[float, float]] = {}
    for key, value in raw.items():
        if key.startswith("merge."):
            label_merge[key[len("merge."):]] = value
        elif key.startswith("outlier."):
            parts = value.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{key}: expected 'lo,hi', got {value!r}")
            outlier_ranges[key[len("outlier."):]] = (
                _to_float(key, parts[0]), _to_float(key, parts[1])
            )
        elif key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")

    def get(key: str, default: str) -> str:
        return raw.get(key, default)

    class_names = tuple(get("synth.classes", "CN,MCI,AD").split(","))
    if len(class_names) != 3:
        raise ConfigError("synth.classes must name exactly 3 classes")
    try:
        synth = SynthConfig(
            n_subjects=_to_int("synth.subjects", get("synth.subjects", "200")),
            n_biomarkers=_to_int("synth.biomarkers", get("synth.biomarkers", "6")),
            n_visits=_to_int("synth.visits", get("synth.visits", "11")),
            noise=_to_float("synth.noise", get("synth.noise", "0.1")),
            missing_rate=_to_float("synth.missing_rate", get("synth.missing_rate", "0.3")),
            seed=_to_int("synth.seed", get("synth.seed", "0")),
            class_names=class_names,  # type: ignore[arg-type]
        )
        default_visits = ",".join(str(i) for i in range(synth.n_visits))
        prep = PreprocessConfig(
            visit_indices=tuple(
                _to_int("visit_indices", v)
                for v in get("visit_indices", default_visits).split(",")
            ),
            use_ref_volume=_to_bool("use_ref_volume", get("use_ref_volume", "true")),
            outlier_ranges=outlier_ranges,
            min_visits=_to_int("min_visits", get("min_visits", "3")),
            val_fraction=_to_float("split.val", get("split.val", "0.1")),
            test_fraction=_to_float("split.test", get("split.test", "0.1")),
            split_seed=_to_int("split.seed", get("split.seed", "0")),
        )
        train = TrainConfig(
            epochs=_to_int("train.epochs", get("train.epochs", "1000")),
            learning_rate=_to_float("train.alpha", get("train.alpha", "0.1")),
            momentum=_to_float("train.mu", get("train.mu", "0.9")),
            weight_decay=_to_float("train.gamma", get("train.gamma", "0.0001")),
            init_seed=_to_int("train.init_seed", get("train.init_seed", "0")),
            init_scale=_to_float("train.init_range", get("train.init_range", "0.05")),
            eval_every=_to_int("train.eval_every", get("train.eval_every", "50")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    labels = None
    if "labels" in raw:
        labels = tuple(part.strip() for part in raw["labels"].split(",") if part.strip())
    strategy = get("missing_strategy", "masked")
    if strategy not in ("masked", "mean", "forward"):
        raise ConfigError(f"missing_strategy must be masked|mean|forward, got {strategy!r}")
    ridge_raw = get("lda.ridge", "auto")
    ridge = None if ridge_raw == "auto" else _to_float("lda.ridge", ridge_raw)
    return ExperimentConfig(
        synth=synth,
        prep=prep,
        train=train,
        labels=labels,
        label_merge=label_merge,
        missing_strategy=strategy,
        lda_ridge=ridge,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    raw = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
    return config_from_mapping(raw)
