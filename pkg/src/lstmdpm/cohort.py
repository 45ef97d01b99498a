"""Longitudinal cohort ingestion, preprocessing, and synthesis.

The pipeline turns a labeled visit table into masked one-step-ahead
sequence batches: reference-volume normalization, visit windowing,
outlier removal, a minimum-visits filter, a stratified subject split,
and affine scaling to [-1, 1] fit on the training split only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError
from .masked_data import MaskedBatch, MaskedSequence

SCALING_FORMAT = "scaling-spec-1"
PREPARED_FORMAT = "prepared-1"


@dataclass(frozen=True)
class VisitRow:
    subject_id: str
    visit: int
    label: Optional[str]
    values: np.ndarray  # (N,) with NaN for missing
    ref_volume: Optional[float] = None

    def __post_init__(self) -> None:
        self.values.setflags(write=False)


@dataclass(frozen=True)
class CohortTable:
    """Rows of per-visit biomarker measurements, in file order."""

    biomarkers: Tuple[str, ...]
    rows: Tuple[VisitRow, ...]
    has_ref_volume: bool = False

    def subjects(self) -> Tuple[str, ...]:
        """Subject ids in order of first appearance."""
        seen: Dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.subject_id, None)
        return tuple(seen)

    def by_subject(self) -> Dict[str, List[VisitRow]]:
        grouped: Dict[str, List[VisitRow]] = {}
        for row in self.rows:
            grouped.setdefault(row.subject_id, []).append(row)
        return grouped


def _format_value(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def load_csv(
    path,
    label_set: Optional[Sequence[str]] = None,
    label_merge: Optional[Mapping[str, str]] = None,
) -> CohortTable:
    """Parse a cohort CSV.

    Grammar: header ``subject_id,visit,label,<biomarkers...>[,ref_volume]``,
    comma-separated, empty field = missing, no quoting.  Labels are passed
    through ``label_merge`` first, then checked against ``label_set`` when
    one is configured.  Errors carry the offending line number.
    """
    path = Path(path)
    merge = dict(label_merge or {})
    allowed = set(label_set) if label_set is not None else None
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:3] != ["subject_id", "visit", "label"]:
            raise DataError(f"{path}: header must start with subject_id,visit,label")
        has_ref = header[-1] == "ref_volume"
        biomarkers = tuple(header[3 : -1 if has_ref else len(header)])
        if not biomarkers:
            raise DataError(f"{path}: no biomarker columns")
        rows: List[VisitRow] = []
        seen_visits: Dict[Tuple[str, int], int] = {}
        last_visit: Dict[str, int] = {}
        for lineno, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
            subject_id = record[0]
            try:
                visit = int(record[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed visit index {record[1]!r}") from None
            if visit < 0:
                raise DataError(f"{path}:{lineno}: negative visit index")
            key = (subject_id, visit)
            if key in seen_visits:
                raise DataError(
                    f"{path}:{lineno}: duplicate visit {visit} for subject "
                    f"{subject_id!r} (first at line {seen_visits[key]})"
                )
            seen_visits[key] = lineno
            if subject_id in last_visit and visit <= last_visit[subject_id]:
                raise DataError(
                    f"{path}:{lineno}: visit indices must be strictly increasing "
                    f"within subject {subject_id!r}"
                )
            last_visit[subject_id] = visit
            label = record[2] or None
            if label is not None:
                label = merge.get(label, label)
                if allowed is not None and label not in allowed:
                    raise DataError(f"{path}:{lineno}: unknown label {label!r}")
            values = np.empty(len(biomarkers))
            for n, fieldval in enumerate(record[3 : 3 + len(biomarkers)]):
                if fieldval == "":
                    values[n] = np.nan
                else:
                    try:
                        values[n] = float(fieldval)
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: malformed number {fieldval!r}"
                        ) from None
            ref = None
            if has_ref and record[-1] != "":
                try:
                    ref = float(record[-1])
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: malformed ref_volume {record[-1]!r}"
                    ) from None
            rows.append(
                VisitRow(subject_id=subject_id, visit=visit, label=label, values=values, ref_volume=ref)
            )
    return CohortTable(biomarkers=biomarkers, rows=tuple(rows), has_ref_volume=has_ref)


def write_csv(table: CohortTable, path) -> None:
    """Write a cohort CSV; values round-trip bit-exactly through repr."""
    header = ["subject_id", "visit", "label", *table.biomarkers]
    if table.has_ref_volume:
        header.append("ref_volume")
    lines = [",".join(header)]
    for row in table.rows:
        record = [row.subject_id, str(row.visit), row.label or ""]
        record.extend(_format_value(v) for v in row.values)
        if table.has_ref_volume:
            record.append("" if row.ref_volume is None else repr(float(row.ref_volume)))
        lines.append(",".join(record))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ScalingSpec:
    """Per-biomarker outlier bounds and the affine [-1, 1] scaling."""

    biomarkers: Tuple[str, ...]
    lo: np.ndarray    # outlier lower bounds, -inf where unset
    hi: np.ndarray    # outlier upper bounds, +inf where unset
    vmin: np.ndarray  # training-split minima
    vmax: np.ndarray  # training-split maxima

    def __post_init__(self) -> None:
        for arr in (self.lo, self.hi, self.vmin, self.vmax):
            arr.setflags(write=False)
        if (self.vmin >= self.vmax).any():
            bad = [self.biomarkers[n] for n in np.flatnonzero(self.vmin >= self.vmax)]
            raise DataError(f"degenerate training range for biomarker(s) {bad}")

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Original units -> [-1, 1] (training min/max map to the endpoints)."""
        return 2.0 * (values - self.vmin) / (self.vmax - self.vmin) - 1.0

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return (values + 1.0) / 2.0 * (self.vmax - self.vmin) + self.vmin

    def save(self, path) -> None:
        lines = [SCALING_FORMAT]
        for n, name in enumerate(self.biomarkers):
            lo = "none" if np.isneginf(self.lo[n]) else repr(float(self.lo[n]))
            hi = "none" if np.isposinf(self.hi[n]) else repr(float(self.hi[n]))
            lines.append(
                f"{name} {lo} {hi} {float(self.vmin[n])!r} {float(self.vmax[n])!r}"
            )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ScalingSpec":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != SCALING_FORMAT:
            raise DataError(f"{path}: not a {SCALING_FORMAT} file")
        names: List[str] = []
        lo, hi, vmin, vmax = [], [], [], []
        for line in lines[1:]:
            parts = line.split()
            if len(parts) != 5:
                raise DataError(f"{path}: malformed scaling line {line!r}")
            names.append(parts[0])
            lo.append(-np.inf if parts[1] == "none" else float(parts[1]))
            hi.append(np.inf if parts[2] == "none" else float(parts[2]))
            vmin.append(float(parts[3]))
            vmax.append(float(parts[4]))
        return cls(
            biomarkers=tuple(names),
            lo=np.array(lo), hi=np.array(hi),
            vmin=np.array(vmin), vmax=np.array(vmax),
        )


@dataclass(frozen=True)
class PreprocessConfig:
    """Pipeline settings; defaults give an 11-visit window and 80/10/10."""

    visit_indices: Tuple[int, ...] = tuple(range(11))
    use_ref_volume: bool = True
    outlier_ranges: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    min_visits: int = 3
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    split_seed: int = 0

    def __post_init__(self) -> None:
        if len(self.visit_indices) < 3:
            raise ConfigError("need at least 3 visit indices for sequence learning")
        if len(set(self.visit_indices)) != len(self.visit_indices):
            raise ConfigError("visit_indices must be distinct")
        if not 0 <= self.val_fraction < 1 or not 0 <= self.test_fraction < 1:
            raise ConfigError("split fractions must be in [0, 1)")
        if self.val_fraction + self.test_fraction >= 1:
            raise ConfigError("split fractions must leave room for training")


@dataclass(frozen=True)
class Prepared:
    """Windowed, scaled splits plus the scaling needed to invert them."""

    train: MaskedBatch
    val: MaskedBatch
    test: MaskedBatch
    scaling: ScalingSpec
    biomarkers: Tuple[str, ...]
    n_visits: int

    def split(self, name: str) -> MaskedBatch:
        if name not in ("train", "val", "test"):
            raise ConfigError(f"unknown split {name!r}")
        return getattr(self, name)


def preprocess(table: CohortTable, config: PreprocessConfig) -> Prepared:
    """Run the full preparation pipeline on a raw cohort table."""
    n = len(table.biomarkers)
    visits = config.visit_indices
    v_count = len(visits)
    visit_pos = {v: i for i, v in enumerate(visits)}

    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for name, (rlo, rhi) in config.outlier_ranges.items():
        if name not in table.biomarkers:
            raise ConfigError(f"outlier range for unknown biomarker {name!r}")
        idx = table.biomarkers.index(name)
        lo[idx], hi[idx] = rlo, rhi

    # Per-subject (V, N) matrices over the visit window, plus per-visit labels.
    matrices: Dict[str, np.ndarray] = {}
    labels: Dict[str, List[Optional[str]]] = {}
    for subject, rows in table.by_subject().items():
        mat = np.full((v_count, n), np.nan)
        labs: List[Optional[str]] = [None] * v_count
        for row in rows:
            pos = visit_pos.get(row.visit)
            if pos is None:
                continue
            values = row.values
            if config.use_ref_volume and table.has_ref_volume:
                if row.ref_volume is None:
                    values = np.full(n, np.nan)
                else:
                    values = values / row.ref_volume
            values = np.where((values < lo) | (values > hi), np.nan, values)
            mat[pos] = values
            labs[pos] = row.label
        matrices[subject] = mat
        labels[subject] = labs

    # Keep subjects with at least min_visits available points per biomarker.
    kept = [
        s
        for s in table.subjects()
        if ((~np.isnan(matrices[s])).sum(axis=0) >= config.min_visits).all()
    ]
    if not kept:
        raise DataError("no subjects left after the minimum-visits filter")

    split_names = _stratified_split(
        kept,
        {s: labels[s][0] for s in kept},
        config.val_fraction,
        config.test_fraction,
        config.split_seed,
    )
    order = {s: i for i, s in enumerate(kept)}
    splits = {
        part: sorted(members, key=order.__getitem__)
        for part, members in split_names.items()
    }
    if not splits["train"]:
        raise DataError("training split is empty")

    train_stack = np.stack([matrices[s] for s in splits["train"]])
    vmin = np.nanmin(train_stack, axis=(0, 1))
    vmax = np.nanmax(train_stack, axis=(0, 1))
    if np.isnan(vmin).any():
        bad = [table.biomarkers[i] for i in np.flatnonzero(np.isnan(vmin))]
        raise DataError(f"no training values for biomarker(s) {bad}")
    scaling = ScalingSpec(
        biomarkers=table.biomarkers, lo=lo, hi=hi, vmin=vmin, vmax=vmax
    )

    batches = {}
    for part, members in splits.items():
        if not members and part != "train":
            batches[part] = None
            continue
        seqs = [
            _window_sequence(s, scaling.transform(matrices[s]), labels[s])
            for s in members
        ]
        batches[part] = MaskedBatch(sequences=tuple(seqs)) if seqs else None
    if batches["val"] is None or batches["test"] is None:
        raise DataError("validation or test split is empty; use more subjects")
    return Prepared(
        train=batches["train"],
        val=batches["val"],
        test=batches["test"],
        scaling=scaling,
        biomarkers=table.biomarkers,
        n_visits=v_count,
    )


def _stratified_split(
    subjects: Sequence[str],
    baseline_label: Mapping[str, Optional[str]],
    val_fraction: float,
    test_fraction: float,
    seed: int,
) -> Dict[str, List[str]]:
    """Per-baseline-class split: floor(fraction * class size) subjects go
    to val and test each, the remainder to training."""
    rng = np.random.default_rng(seed)
    by_class: Dict[str, List[str]] = {}
    for s in subjects:
        by_class.setdefault(baseline_label[s] or "", []).append(s)
    out: Dict[str, List[str]] = {"train": [], "val": [], "test": []}
    for cls in sorted(by_class):
        members = by_class[cls]
        perm = rng.permutation(len(members))
        n_val = int(val_fraction * len(members))
        n_test = int(test_fraction * len(members))
        shuffled = [members[i] for i in perm]
        out["val"].extend(shuffled[:n_val])
        out["test"].extend(shuffled[n_val : n_val + n_test])
        out["train"].extend(shuffled[n_val + n_test :])
    return out


def _window_sequence(
    subject: str, scaled: np.ndarray, labels: Sequence[Optional[str]]
) -> MaskedSequence:
    """One-step-ahead windowing: inputs are visits 0..V-2, targets 1..V-1."""
    inputs = scaled[:-1]
    targets = scaled[1:]
    input_mask = ~np.isnan(inputs)
    target_mask = ~np.isnan(targets)
    return MaskedSequence(
        subject_id=subject,
        inputs=np.where(input_mask, inputs, 0.0),
        input_mask=input_mask,
        targets=np.where(target_mask, targets, 0.0),
        target_mask=target_mask,
        labels=tuple(labels[1:]),
    )


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic cohort: sigmoid biomarker trajectories over a latent
    progression axis, three stage-threshold classes, MCAR missingness."""

    n_subjects: int = 200
    n_biomarkers: int = 6
    n_visits: int = 11
    noise: float = 0.1
    missing_rate: float = 0.3
    seed: int = 0
    class_names: Tuple[str, str, str] = ("CN", "MCI", "AD")

    def __post_init__(self) -> None:
        if self.n_subjects < 1 or self.n_biomarkers < 1 or self.n_visits < 1:
            raise ConfigError("subjects, biomarkers, and visits must be >= 1")
        if not 0 <= self.missing_rate < 1:
            raise ConfigError("missing_rate must be in [0, 1)")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


def synthesize(config: SynthConfig) -> CohortTable:
    """Generate a labeled longitudinal cohort, deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    n, v = config.n_biomarkers, config.n_visits
    base = rng.uniform(0.5, 5.0, n) * 10.0 ** rng.integers(-2, 1, n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    amp = sign * base * rng.uniform(0.3, 0.8, n)
    slope = rng.uniform(0.4, 1.0, n)
    inflection = rng.uniform(2.0, 8.0, n)
    offsets = rng.uniform(-5.0, 9.0, config.n_subjects)
    noise = rng.normal(size=(config.n_subjects, v, n))
    missing = rng.random((config.n_subjects, v, n)) < config.missing_rate

    rows: List[VisitRow] = []
    thresholds = (0.0, 5.0)
    for j in range(config.n_subjects):
        subject = f"s{j:04d}"
        for t in range(v):
            stage = offsets[j] + t
            if stage < thresholds[0]:
                label = config.class_names[0]
            elif stage < thresholds[1]:
                label = config.class_names[1]
            else:
                label = config.class_names[2]
            traj = base + amp / (1.0 + np.exp(-slope * (stage - inflection)))
            values = traj + config.noise * np.abs(amp) * noise[j, t]
            values = np.where(missing[j, t], np.nan, values)
            rows.append(
                VisitRow(subject_id=subject, visit=t, label=label, values=values)
            )
    biomarkers = tuple(f"bm{i + 1}" for i in range(n))
    return CohortTable(biomarkers=biomarkers, rows=tuple(rows))


def write_prepared(directory, prepared: Prepared) -> None:
    """Persist splits, scaling, and metadata for later training runs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = [
        PREPARED_FORMAT,
        "biomarkers " + ",".join(prepared.biomarkers),
        f"n_visits {prepared.n_visits}",
    ]
    (directory / "meta.txt").write_text("\n".join(meta) + "\n", encoding="utf-8")
    prepared.scaling.save(directory / "scaling.txt")
    for part in ("train", "val", "test"):
        table = _batch_to_table(prepared.split(part), prepared.biomarkers)
        write_csv(table, directory / f"{part}.csv")


def load_prepared(directory) -> Prepared:
    directory = Path(directory)
    meta_lines = (directory / "meta.txt").read_text(encoding="utf-8").splitlines()
    if not meta_lines or meta_lines[0] != PREPARED_FORMAT:
        raise DataError(f"{directory}: not a {PREPARED_FORMAT} directory")
    biomarkers = tuple(meta_lines[1].split(" ", 1)[1].split(","))
    n_visits = int(meta_lines[2].split()[1])
    scaling = ScalingSpec.load(directory / "scaling.txt")
    batches = {}
    for part in ("train", "val", "test"):
        table = load_csv(directory / f"{part}.csv")
        if table.biomarkers != biomarkers:
            raise DataError(f"{directory}/{part}.csv: biomarker mismatch with meta")
        batches[part] = _table_to_batch(table, n_visits)
    return Prepared(
        train=batches["train"],
        val=batches["val"],
        test=batches["test"],
        scaling=scaling,
        biomarkers=biomarkers,
        n_visits=n_visits,
    )


def _batch_to_table(batch: MaskedBatch, biomarkers: Tuple[str, ...]) -> CohortTable:
    """Flatten windowed sequences back to per-visit rows (scaled units)."""
    rows: List[VisitRow] = []
    for seq in batch:
        v_count = seq.n_steps + 1
        values = np.full((v_count, len(biomarkers)), np.nan)
        values[:-1][seq.input_mask] = seq.inputs[seq.input_mask]
        values[1:][seq.target_mask] = seq.targets[seq.target_mask]
        labels: List[Optional[str]] = [None] * v_count
        if seq.labels is not None:
            labels[1:] = list(seq.labels)
        for t in range(v_count):
            rows.append(
                VisitRow(
                    subject_id=seq.subject_id, visit=t, label=labels[t], values=values[t]
                )
            )
    return CohortTable(biomarkers=biomarkers, rows=tuple(rows))


def _table_to_batch(table: CohortTable, n_visits: int) -> MaskedBatch:
    seqs: List[MaskedSequence] = []
    for subject, rows in table.by_subject().items():
        mat = np.full((n_visits, len(table.biomarkers)), np.nan)
        labels: List[Optional[str]] = [None] * n_visits
        for row in rows:
            if row.visit >= n_visits:
                raise DataError(f"visit {row.visit} outside the prepared window")
            mat[row.visit] = row.values
            labels[row.visit] = row.label
        seqs.append(_window_sequence(subject, mat, labels))
    return MaskedBatch(sequences=tuple(seqs))
