"""Acceptance suite: one test per release criterion.

Each test prints a single ``criterion NN <name>: PASS/FAIL`` line (on the
real terminal, bypassing capture) so the run log doubles as the release
checklist.  Thresholds and instance counts are part of the contract and
are not tuned per machine.
"""

import itertools
import time

import numpy as np
import pytest

from lstmdpm.bptt import batch_loss_and_gradients, gradient_check
from lstmdpm.cli import main
from lstmdpm.cohort import PreprocessConfig, SynthConfig, preprocess, synthesize
from lstmdpm.evaluation import ScoredVisit, fit_lda, multiclass_auc, posterior
from lstmdpm.experiments import compare_strategies
from lstmdpm.lstm import PARAMETER_NAMES
from lstmdpm.masked_data import make_batch
from lstmdpm.optimizer import OptimizerState, TrainConfig, momentum_step

from conftest import random_batch, random_params
from test_bptt import unit_factors
from test_evaluation import brute_force_multiclass, random_scored
from test_optimizer import constant_grads, constant_params


def check(capsys, number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    with capsys.disabled():
        print(f"\ncriterion {number:02d} {name}: {status}{suffix}")
    assert ok, f"criterion {number:02d} {name} failed {suffix}"


@pytest.fixture(scope="session")
def benchmark():
    """Fixed-seed synthetic cohort trained under all three strategies
    at the full default budget (shared by criteria 7, 8, and 10)."""
    table = synthesize(SynthConfig(seed=0, noise=0.1))
    prepared = preprocess(table, PreprocessConfig(split_seed=0))
    start = time.monotonic()
    results = compare_strategies(prepared, TrainConfig(init_seed=0))
    elapsed = time.monotonic() - start
    return table, prepared, results, elapsed


def test_criterion_01_gradient_oracle(capsys):
    start = time.monotonic()
    worst = 0.0
    instances = 0
    rates = (0.0, 0.3, 0.6)
    for seed, (in_rate, tg_rate) in enumerate(
        itertools.product(rates, rates), start=100
    ):
        for rep in range(3):
            batch = random_batch(
                seed=seed * 10 + rep, missing_rate=in_rate,
                target_missing_rate=tg_rate,
            )
            params = random_params(seed=seed * 10 + rep + 1)
            report = gradient_check(params, batch, fd_step=1e-6, tolerance=1e-5)
            assert set(report.max_rel_error) == set(PARAMETER_NAMES) | {"x"}
            worst = max(worst, max(report.max_rel_error.values()))
            instances += 1
    elapsed = time.monotonic() - start
    ok = instances >= 20 and worst <= 1e-5 and elapsed < 60.0
    check(
        capsys, 1, "gradient oracle", ok,
        f"{instances} instances, max rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_02_complete_data_equivalence(capsys):
    worst = 0.0
    for seed in range(10):
        batch = random_batch(seed=seed, missing_rate=0.0)
        params = random_params(seed=seed + 50)
        _, grads, _ = batch_loss_and_gradients(params, batch)
        _, raw, _ = batch_loss_and_gradients(params, batch, unit_factors(batch))
        scale = 1.0 / (batch.batch_size * batch.n_steps)
        for name in PARAMETER_NAMES:
            diff = np.abs(
                grads.arrays()[name] - scale * raw.arrays()[name]
            ).max()
            worst = max(worst, float(diff))
    check(
        capsys, 2, "complete-data equivalence", worst <= 1e-12,
        f"10 instances, max abs diff {worst:.2e}",
    )


def test_criterion_03_masked_value_irrelevance(capsys):
    rng = np.random.default_rng(0)
    ok = True
    for seed in range(5):
        batch = random_batch(seed=seed)
        garbage_inputs = np.where(
            batch.input_masks(), batch.inputs(), rng.normal(scale=1e3, size=batch.inputs().shape)
        )
        garbage_targets = np.where(
            batch.target_masks(), batch.targets(), rng.normal(scale=1e3, size=batch.targets().shape)
        )
        corrupted = make_batch(
            [s.subject_id for s in batch],
            garbage_inputs, batch.input_masks(),
            garbage_targets, batch.target_masks(),
        )
        params = random_params(seed=seed + 10)
        loss_a, grads_a, cache_a = batch_loss_and_gradients(params, batch)
        loss_b, grads_b, cache_b = batch_loss_and_gradients(params, corrupted)
        ok = ok and (loss_a == loss_b).all() and (cache_a.h == cache_b.h).all()
        for name in PARAMETER_NAMES:
            ok = ok and (grads_a.arrays()[name] == grads_b.arrays()[name]).all()
    check(capsys, 3, "masked-value irrelevance", ok, "bit-identical on 5 instances")


def test_criterion_04_momentum_exactness(capsys):
    params = constant_params(1.0)
    state = OptimizerState.zeros(params, 0.1, 0.0, 0.9)
    grads = constant_grads(params, 1.0)
    params, state = momentum_step(params, grads, state)
    step1 = all(float(a.max()) == float(a.min()) == 0.9 for a in params.arrays().values())
    params, state = momentum_step(params, grads, state)
    step2 = all(
        abs(float(a.max()) - 0.71) < 1e-15 and abs(float(a.min()) - 0.71) < 1e-15
        for a in params.arrays().values()
    )
    base = random_params(seed=1)
    plain, _ = momentum_step(
        base, constant_grads(base, 0.5), OptimizerState.zeros(base, 0.2, 0.0, 0.0)
    )
    gd = all(
        (plain.arrays()[n] == base.arrays()[n] - 0.1).all() for n in PARAMETER_NAMES
    )
    ok = step1 and step2 and gd
    check(capsys, 4, "momentum exactness", ok, "hand trace 0.9 -> 0.71, plain GD")


def test_criterion_05_auc_oracle(capsys):
    worst = 0.0
    instances = 0
    for seed in range(60):
        for n_classes in (2, 3):
            rng = np.random.default_rng(seed * 2 + n_classes)
            visits = random_scored(rng, n_classes=n_classes)
            worst = max(
                worst, abs(multiclass_auc(visits) - brute_force_multiclass(visits))
            )
            instances += 1
    perfect = [
        ScoredVisit("A", {"A": 0.9, "B": 0.1}),
        ScoredVisit("A", {"A": 0.8, "B": 0.2}),
        ScoredVisit("B", {"A": 0.1, "B": 0.9}),
    ]
    tied = [
        ScoredVisit(label, {"A": 0.5, "B": 0.5}) for label in ("A", "A", "B")
    ]
    ok = (
        instances >= 100
        and worst <= 1e-12
        and multiclass_auc(perfect) == 1.0
        and multiclass_auc(tied) == 0.5
    )
    check(
        capsys, 5, "AUC oracle equivalence", ok,
        f"{instances} instances, max abs diff {worst:.2e}",
    )


def test_criterion_06_lda_closed_form(capsys):
    from lstmdpm.evaluation import LdaModel

    model = LdaModel(
        classes=("neg", "pos"),
        means=np.array([[-1.0], [1.0]]),
        covariance=np.array([[1.0]]),
        priors=np.array([0.5, 0.5]),
    )
    midpoint_err = abs(posterior(model, np.array([0.0]))[0] - 0.5)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 3))
    fitted = fit_lda(x, ["a", "b", "c"] * 10)
    post = posterior(fitted, rng.normal(size=(200, 3)) * 5)
    sum_err = float(np.abs(post.sum(axis=1) - 1.0).max())
    ok = midpoint_err <= 1e-10 and sum_err <= 1e-12
    check(
        capsys, 6, "LDA closed form", ok,
        f"midpoint err {midpoint_err:.2e}, sum err {sum_err:.2e}",
    )


def test_criterion_07_masked_mae_beats_imputation(capsys, benchmark):
    _, _, results, elapsed = benchmark
    masked = results["masked"].mean_mae
    mean_i = results["mean"].mean_mae
    fwd = results["forward"].mean_mae
    ok = masked <= mean_i and masked <= fwd and elapsed < 600.0
    check(
        capsys, 7, "synthetic MAE ordering", ok,
        f"seed 0: masked {masked:.5f} <= mean {mean_i:.5f}, "
        f"forward {fwd:.5f}; {elapsed:.0f}s",
    )


def test_criterion_08_masked_auc_beats_imputation(capsys, benchmark):
    _, _, results, _ = benchmark
    masked = results["masked"].multiclass_auc
    mean_i = results["mean"].multiclass_auc
    fwd = results["forward"].multiclass_auc
    ok = masked >= mean_i and masked >= fwd
    check(
        capsys, 8, "synthetic AUC ordering", ok,
        f"seed 0: masked {masked:.4f} >= mean {mean_i:.4f}, forward {fwd:.4f}",
    )


def test_criterion_09_pipeline_determinism(capsys, tmp_path):
    config = tmp_path / "exp.cfg"
    config.write_text(
        "synth.subjects = 60\nsynth.biomarkers = 3\nsynth.visits = 6\n"
        "synth.seed = 1\ntrain.epochs = 20\ntrain.eval_every = 10\n"
    )
    artifacts = {}
    for run in ("a", "b"):
        csv = tmp_path / f"cohort_{run}.csv"
        prep = tmp_path / f"prepared_{run}"
        model = tmp_path / f"model_{run}"
        report = tmp_path / f"report_{run}.tsv"
        assert main(["synth", "--config", str(config), "--out", str(csv)]) == 0
        assert main(
            ["prepare", "--config", str(config), "--data", str(csv),
             "--out", str(prep)]
        ) == 0
        assert main(
            ["train", "--config", str(config), "--prepared", str(prep),
             "--out", str(model)]
        ) == 0
        assert main(
            ["evaluate", "--config", str(config), "--prepared", str(prep),
             "--checkpoint", str(model / "checkpoint.txt"), "--out", str(report)]
        ) == 0
        artifacts[run] = [
            csv.read_bytes(),
            (prep / "scaling.txt").read_bytes(),
            (prep / "train.csv").read_bytes(),
            (prep / "val.csv").read_bytes(),
            (prep / "test.csv").read_bytes(),
            (model / "checkpoint.txt").read_bytes(),
            (model / "history.log").read_bytes(),
            report.read_bytes(),
        ]
    ok = artifacts["a"] == artifacts["b"]
    check(capsys, 9, "pipeline determinism", ok, "8 artifacts byte-identical")


def test_criterion_10_filter_and_split_fidelity(capsys, benchmark):
    table, prepared, _, _ = benchmark
    splits = {part: prepared.split(part) for part in ("train", "val", "test")}

    min_visits_ok = True
    for batch in splits.values():
        for seq in batch:
            # Availability per biomarker over the visit window: visit 0
            # appears only as an input, visits 1..T only as targets.
            available = seq.input_mask[:1].sum(axis=0) + seq.target_mask.sum(axis=0)
            min_visits_ok = min_visits_ok and (available >= 3).all()

    ids = {part: {s.subject_id for s in batch} for part, batch in splits.items()}
    disjoint = (
        not (ids["train"] & ids["val"])
        and not (ids["train"] & ids["test"])
        and not (ids["val"] & ids["test"])
    )

    kept = ids["train"] | ids["val"] | ids["test"]
    baseline = {
        subject: rows[0].label
        for subject, rows in table.by_subject().items()
        if subject in kept
    }
    floor_ok = True
    for cls in set(baseline.values()):
        members = {s for s, lab in baseline.items() if lab == cls}
        expected = int(0.1 * len(members))
        floor_ok = (
            floor_ok
            and len(ids["val"] & members) == expected
            and len(ids["test"] & members) == expected
        )

    ok = min_visits_ok and disjoint and floor_ok
    check(
        capsys, 10, "filter and split fidelity", ok,
        f"{len(kept)} subjects, min-visits + disjoint + floor rule",
    )
