import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from dcnn.data import DatasetBundle
from dcnn.experiments import (ExperimentConfig, TrialReport, ci_halfwidth, confusion_matrix,
                              evaluate_metrics, hop_sweep, load_dataset, one_sample_t_test,
                              run_graph_trials, run_learning_curve, run_node_trials,
                              summary_csv, trial_seeds, welch_t_test, wide_csv,
                              write_report)
from dcnn.graph import Graph
from dcnn.training import TrainConfig

from .conftest import require_data

NOISY = "synthetic:two-cliques:100:noise=2"


# -- metrics ----------------------------------------------------------------

def test_perfect_predictions():
    assert evaluate_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3) == (1.0, 1.0, 1.0)


def test_metrics_by_hand():
    acc, micro, macro = evaluate_metrics([0, 1, 1], [0, 0, 1], 2)
    assert acc == pytest.approx(2 / 3, abs=1e-15)
    assert micro == pytest.approx(2 / 3, abs=1e-15)
    assert macro == pytest.approx(2 / 3, abs=1e-15)


def test_macro_counts_absent_class_as_zero():
    # class 2 is never predicted nor present: its F1 is 0/0 := 0
    acc, _, macro = evaluate_metrics([0, 1], [0, 1], 3)
    assert acc == 1.0 and macro == pytest.approx(2 / 3, abs=1e-15)


def test_confusion_matrix():
    cm = confusion_matrix([0, 1, 1, 2], [0, 0, 1, 2], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]


@pytest.mark.parametrize("pred, truth", [([], []), ([0, 1], [0]), ([0, 3], [0, 1]),
                                         ([0, -1], [0, 1])])
def test_metric_errors(pred, truth):
    with pytest.raises(ValueError):
        evaluate_metrics(pred, truth, 3)


@given(st.integers(1, 6), st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)),
                                   min_size=1, max_size=60))
def test_micro_f1_equals_accuracy(c, pairs):
    pred = [p % c for p, _ in pairs]
    truth = [t % c for _, t in pairs]
    acc, micro, macro = evaluate_metrics(pred, truth, c)
    assert abs(micro - acc) < 1e-12
    assert 0.0 <= macro <= 1.0


# -- significance tests -----------------------------------------------------

def test_welch_hand_example():
    a, b = [1.0, 1.1, 0.9], [0.0, 0.1, -0.1]
    res = welch_t_test(a, b)
    assert res.statistic == pytest.approx(1.0 / math.sqrt(2 * 0.01 / 3), rel=1e-12)
    assert res.statistic == pytest.approx(12.247448713915889, rel=1e-12)
    assert res.df == pytest.approx(4.0, rel=1e-12)
    assert res.pvalue < 0.001
    ref = sps.ttest_ind(a, b, equal_var=False, alternative="greater")
    assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-10)


def test_welch_identical_samples():
    res = welch_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert res.statistic == 0.0 and res.pvalue == pytest.approx(0.5, abs=1e-15)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12),
       st.lists(st.floats(-10, 10), min_size=2, max_size=12), st.booleans())
def test_welch_matches_scipy_and_is_antisymmetric(a, b, one_tailed):
    # scipy's moments lose precision on near-constant samples
    if min(np.ptp(a), np.ptp(b)) < 1e-3:
        return
    res, rev = welch_t_test(a, b, one_tailed), welch_t_test(b, a, one_tailed)
    assert rev.statistic == pytest.approx(-res.statistic, rel=1e-12, abs=1e-12)
    alt = "greater" if one_tailed else "two-sided"
    ref = sps.ttest_ind(a, b, equal_var=False, alternative=alt)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-12)


def test_welch_degenerate_samples():
    same = welch_t_test([1.0, 1.0], [1.0, 1.0])
    assert math.isnan(same.statistic) and math.isnan(same.pvalue)
    apart = welch_t_test([2.0, 2.0], [1.0, 1.0])
    assert apart.statistic == math.inf and apart.pvalue == 0.0
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def test_one_sample_example():
    res = one_sample_t_test([0.86, 0.87, 0.88], 0.8449)
    assert res.statistic > 0 and res.pvalue < 0.05
    ref = sps.ttest_1samp([0.86, 0.87, 0.88], 0.8449, alternative="greater")
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-10)
    two = one_sample_t_test([0.86, 0.87, 0.88], 0.8449, one_tailed=False)
    assert two.pvalue == pytest.approx(2 * res.pvalue, rel=1e-12)
    with pytest.raises(ValueError):
        one_sample_t_test([1.0], 0.0)


def test_ci_matches_student_t():
    vals = [0.8, 0.82, 0.85, 0.79]
    lo, hi = sps.t.interval(0.95, 3, loc=np.mean(vals), scale=sps.sem(vals))
    assert ci_halfwidth(vals) == pytest.approx((hi - lo) / 2, rel=1e-12)
    assert ci_halfwidth([0.5]) is None


def test_ci_shrinks_with_more_trials():
    rng = np.random.default_rng(0)
    small = np.mean([ci_halfwidth(rng.normal(size=5)) for _ in range(200)])
    large = np.mean([ci_halfwidth(rng.normal(size=50)) for _ in range(200)])
    assert large < small / 2


# -- reports ----------------------------------------------------------------

def test_report_serialization(tmp_path):
    r = TrialReport({"model": "dcnn"})
    r.add(0.5, 0.5, 0.4)
    r.add(0.7, 0.7, 0.6)
    d = r.to_dict()
    assert d["trials"] == 2 and d["metrics"]["accuracy"]["mean"] == pytest.approx(0.6)
    assert min(r.accuracy) <= r.mean("accuracy") <= max(r.accuracy)
    write_report(r, tmp_path)
    back = TrialReport.load(tmp_path / "report.json")
    assert back.to_json() == r.to_json()
    assert (tmp_path / "report.csv").read_text().splitlines()[0] == \
        "trial,accuracy,micro_f1,macro_f1"
    with pytest.raises(ValueError):
        r.values("recall")


def test_summary_and_wide_csv():
    r = TrialReport()
    r.add(1.0, 1.0, 1.0)
    rows = [(0.1, r), (1.0, r)]
    assert len(summary_csv(rows, "fraction").splitlines()) == 1 + 2 * 3
    wide = wide_csv([(h, r) for h in range(6)], "hops").splitlines()
    assert len(wide) == 1 + 6
    assert wide[0].startswith("hops,accuracy_mean,accuracy_ci95")


def test_trial_seeds_are_prefix_stable():
    assert trial_seeds(7, 3) == trial_seeds(7, 5)[:3]
    assert trial_seeds(7, 3) != trial_seeds(8, 3)


# -- configuration ----------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(model="svm"), dict(trials=0), dict(hops=-1)])
def test_experiment_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig("x", **kwargs)


def test_load_dataset_specs(tmp_path):
    b = load_dataset("synthetic:two-cliques:12:noise=0.5:seed=3")
    assert b.population == 12 and b.num_features == 3
    with pytest.raises(ValueError):
        load_dataset("synthetic:two-cliques")
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing")
    with pytest.raises(ValueError, match="format"):
        load_dataset(tmp_path)


# -- protocols --------------------------------------------------------------

def test_node_trials_on_separable_synthetic():
    cfg = ExperimentConfig("synthetic:two-cliques:30:noise=0.3", trials=5)
    report = run_node_trials(cfg)
    assert report.trials == 5 and report.mean("accuracy") == 1.0
    assert report.accuracy == report.micro_f1


def test_single_trial_has_no_interval():
    report = run_node_trials(ExperimentConfig("synthetic:two-cliques:30:noise=0.3",
                                              trials=1))
    assert report.trials == 1 and report.ci("accuracy") is None
    assert report.to_dict()["metrics"]["accuracy"]["ci95"] is None


def test_constant_graph_task():
    g = Graph.from_edges(3, [(0, 1), (1, 2)], features=np.ones((3, 1)))
    bundle = DatasetBundle("const", "graph", (g,) * 9, 1, ("only",),
                           graph_labels=np.zeros(9, int))
    report = run_graph_trials(ExperimentConfig("const", trials=3), bundle)
    assert report.accuracy == [1.0, 1.0, 1.0]


def test_task_mismatch_is_rejected():
    with pytest.raises(ValueError, match="node-classification"):
        run_graph_trials(ExperimentConfig("synthetic:two-cliques:12", trials=1))


@pytest.mark.parametrize("model", ["ked", "kled", "l1logistic", "l2logistic"])
def test_baseline_models_run(model):
    report = run_node_trials(ExperimentConfig("synthetic:two-cliques:30:noise=0.3",
                                              model=model, trials=2))
    assert report.trials == 2 and not report.failed
    assert report.mean("accuracy") >= 0.9


def test_kernels_reject_graph_task(rng):
    g = Graph.from_edges(3, [(0, 1)], features=np.ones((3, 1)))
    bundle = DatasetBundle("g", "graph", (g,) * 6, 2, graph_labels=[0, 1] * 3)
    report = run_graph_trials(ExperimentConfig("g", model="ked", trials=2), bundle)
    assert report.trials == 0 and len(report.failed) == 2
    assert "node classification" in report.failed[0]["error"]


def test_failed_trials_are_recorded_not_fatal():
    cfg = ExperimentConfig("synthetic:two-cliques:30", trials=2,
                           train=TrainConfig(max_epochs=3))
    bundle = load_dataset(cfg.dataset)
    g = bundle.graph
    bad = g.with_features(np.full((30, 1), np.nan))
    broken = DatasetBundle(bundle.name, "node", (bad,), 2, bundle.class_names)
    report = run_node_trials(cfg, broken)
    assert report.trials == 0 and len(report.failed) == 2
    assert report.mean("accuracy") is None


def test_reports_are_reproducible(tmp_path):
    cfg = ExperimentConfig(NOISY, trials=3, seed=11)
    write_report(run_node_trials(cfg), tmp_path / "a")
    write_report(run_node_trials(cfg), tmp_path / "b")
    for name in ("report.json", "report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    echo = json.loads((tmp_path / "a" / "report.json").read_text())["config"]
    assert echo["seed"] == 11 and echo["train"]["learning_rate"] == 0.05


def test_learning_curve_improves_with_data():
    rows = run_learning_curve(ExperimentConfig(NOISY, trials=20), [0.1, 1.0])
    (f_lo, lo), (f_hi, hi) = rows
    assert (f_lo, f_hi) == (0.1, 1.0)
    assert hi.mean("accuracy") >= lo.mean("accuracy")
    assert welch_t_test(hi.accuracy, lo.accuracy).pvalue < 0.05
    assert len(summary_csv(rows, "fraction").splitlines()) == 1 + 2 * 3


def test_learning_curve_full_fraction_is_80_10_10():
    bundle = load_dataset(NOISY)
    (_, report), = run_learning_curve(ExperimentConfig(NOISY, trials=1), [1.0], bundle)
    assert report.config["protocol"] == "learning-curve" and report.config["fraction"] == 1.0
    with pytest.raises(ValueError):
        run_learning_curve(ExperimentConfig(NOISY, trials=1), [0.0])


def test_hop_sweep_on_noisy_features():
    rows = hop_sweep(ExperimentConfig(NOISY, trials=10), [0, 2, 3])
    acc = {h: r.mean("accuracy") for h, r in rows}
    assert acc[2] - acc[0] >= 0.3 and acc[3] - acc[0] >= 0.3
    with pytest.raises(ValueError):
        hop_sweep(ExperimentConfig(NOISY, trials=1), [])


def test_cora_kernel_baseline_smoke():
    path = require_data("cora")
    report = run_node_trials(ExperimentConfig(str(path), model="kled", trials=1))
    assert report.mean("accuracy") > 0.75
