"""Multi-trial experiment protocols, metrics, reports and significance tests."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import baselines
from .data import (DatasetBundle, load_citation_dir, load_tu_dataset, make_splits,
                   synthetic_bundle)
from .graph import augment_with_edges
from .training import TrainConfig, entity_inputs, predict_entities, train_entities

log = logging.getLogger(__name__)

MODELS = ("dcnn", "ked", "kled", "l1logistic", "l2logistic")
METRICS = ("accuracy", "micro_f1", "macro_f1")
REPORT_VERSION = 1


# -- metrics ----------------------------------------------------------------

def confusion_matrix(predictions, truth, num_classes) -> np.ndarray:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    idx = true * num_classes + pred
    return np.bincount(idx, minlength=num_classes ** 2).reshape(num_classes, num_classes)


def evaluate_metrics(predictions, truth, num_classes):
    """Accuracy, micro-averaged F1 and macro-averaged F1 (0/0 counts as 0)."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth must have equal length")
    if pred.size == 0:
        raise ValueError("cannot score an empty prediction set")
    for arr in (pred, true):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"labels must lie in [0, {num_classes})")
    cm = confusion_matrix(pred, true, num_classes)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    accuracy = tp.sum() / pred.size
    micro = 2 * tp.sum() / (2 * tp.sum() + fp.sum() + fn.sum())
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(accuracy), float(micro), float(per_class.mean())


# -- significance tests -----------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    statistic: float
    df: float
    pvalue: float


def _p_from_t(t, df, one_tailed):
    if math.isnan(t):
        return math.nan
    if one_tailed:
        return float(sps.t.sf(t, df))
    return float(2 * sps.t.sf(abs(t), df))


def welch_t_test(sample_a, sample_b, one_tailed=True) -> TTestResult:
    """Welch's unequal-variance t test; one-tailed alternative is mean(a) > mean(b).

    If both samples have zero variance the statistic is +-inf (different
    means) or NaN with an undefined (NaN) p-value (equal means).
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        t = math.nan if diff == 0 else math.copysign(math.inf, diff)
        df = float(a.size + b.size - 2)
    else:
        t = diff / math.sqrt(se2)
        df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return TTestResult(float(t), float(df), _p_from_t(t, df, one_tailed))


def one_sample_t_test(sample, mu0, one_tailed=True) -> TTestResult:
    """Student t test of mean(sample) against ``mu0``; one-tailed alternative is ``>``."""
    x = np.asarray(sample, dtype=np.float64)
    if x.size < 2:
        raise ValueError("sample needs at least two values")
    se = x.std(ddof=1) / math.sqrt(x.size)
    diff = x.mean() - mu0
    if se == 0:
        t = math.nan if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = diff / se
    df = float(x.size - 1)
    return TTestResult(float(t), df, _p_from_t(t, df, one_tailed))


# -- reports ----------------------------------------------------------------

def ci_halfwidth(values, level=0.95):
    """Student-t confidence half-width of the mean, or None below two values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return None
    q = sps.t.ppf(0.5 + level / 2, values.size - 1)
    return float(q * values.std(ddof=1) / math.sqrt(values.size))


@dataclass
class TrialReport:
    config: dict = field(default_factory=dict)
    accuracy: list = field(default_factory=list)
    micro_f1: list = field(default_factory=list)
    macro_f1: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.accuracy)

    def values(self, metric):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        return getattr(self, metric)

    def mean(self, metric):
        vals = self.values(metric)
        return float(np.mean(vals)) if vals else None

    def ci(self, metric):
        return ci_halfwidth(self.values(metric))

    def add(self, acc, micro, macro):
        self.accuracy.append(acc)
        self.micro_f1.append(micro)
        self.macro_f1.append(macro)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "config": self.config,
            "trials": self.trials,
            "failed": self.failed,
            "metrics": {
                m: {"values": self.values(m), "mean": self.mean(m), "ci95": self.ci(m)}
                for m in METRICS
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", *METRICS])
        for i in range(self.trials):
            w.writerow([i, *(repr(self.values(m)[i]) for m in METRICS)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d) -> TrialReport:
        metrics = d["metrics"]
        return cls(d.get("config", {}), list(metrics["accuracy"]["values"]),
                   list(metrics["micro_f1"]["values"]),
                   list(metrics["macro_f1"]["values"]), list(d.get("failed", [])))

    @classmethod
    def load(cls, path) -> TrialReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


def summary_csv(rows, key) -> str:
    """One row per (``key`` value, metric) for a list of ``(value, report)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, "metric", "mean", "ci95", "trials"])
    for value, report in rows:
        for m in METRICS:
            ci = report.ci(m)
            mean = report.mean(m)
            w.writerow([value, m, "" if mean is None else repr(mean),
                        "" if ci is None else repr(ci), report.trials])
    return buf.getvalue()


def wide_csv(rows, key) -> str:
    """One row per ``key`` value with mean and CI columns for every metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, *(f"{m}_{s}" for m in METRICS for s in ("mean", "ci95")), "trials"])
    for value, report in rows:
        cells = []
        for m in METRICS:
            mean, ci = report.mean(m), report.ci(m)
            cells += ["" if mean is None else repr(mean), "" if ci is None else repr(ci)]
        w.writerow([value, *cells, report.trials])
    return buf.getvalue()


def write_report(report: TrialReport, out_dir, stem="report"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}.csv").write_text(report.to_csv())


# -- experiment configuration ----------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    model: str = "dcnn"
    hops: int = 2
    trials: int = 10
    protocol: str = "thirds"
    fraction: float = 1.0
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.hops < 0:
            raise ValueError("hops must be nonnegative")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d


def load_dataset(spec) -> DatasetBundle:
    """Resolve a dataset argument.

    ``synthetic:<kind>:<n>[:noise=<sigma>][:seed=<s>]`` builds a synthetic
    node-task graph; a directory holding ``*.content``/``*.cites`` is read
    as a citation network and one holding ``*_A.txt`` as a TU dataset.
    """
    if isinstance(spec, DatasetBundle):
        return spec
    spec = str(spec)
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        if len(parts) < 3:
            raise ValueError("synthetic datasets are written synthetic:<kind>:<n>")
        opts = dict(p.split("=", 1) for p in parts[3:])
        noise = float(opts["noise"]) if "noise" in opts else None
        return synthetic_bundle(parts[1], int(parts[2]), int(opts.get("seed", 0)),
                                float(opts["p"]) if "p" in opts else None, noise)
    path = Path(spec)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {spec}")
    if any(path.glob("*.content")) or any(path.glob("*.content.gz")):
        return load_citation_dir(path)
    if any(path.glob("*_A.txt")) or any(path.glob("*_A.txt.gz")):
        return load_tu_dataset(path)
    raise ValueError(f"cannot tell the format of dataset directory {spec}")


def trial_seeds(master_seed, trials):
    """Per-trial ``(split_seed, train_seed)`` pairs derived from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [tuple(int(v) for v in c.generate_state(2)) for c in children]


class _Runner:
    """Caches the split-independent work for one (dataset, model, hops)."""

    def __init__(self, bundle: DatasetBundle, config: ExperimentConfig):
        self.bundle = bundle
        self.config = config
        self.labels = np.asarray(bundle.labels)
        self._inputs = None
        self._family = None
        self._features = None
        self.last_fit = None  # TrainResult of the latest DCNN trial

    def inputs(self):
        if self._inputs is None:
            b = self.bundle
            data = b.graphs if b.task == "graph" else b.graph
            self._inputs, _ = entity_inputs(b.task, data, self.config.hops,
                                            self.labels)
        return self._inputs

    def family(self):
        if self._family is None:
            if self.bundle.task != "node":
                raise ValueError("kernel baselines apply to node classification only")
            self._family = baselines.KernelFamily(self.config.model,
                                                  self.bundle.graph.adjacency())
        return self._family

    def features(self):
        if self._features is None:
            b = self.bundle
            if b.task == "graph":
                self._features = np.stack([g.features.mean(axis=0) for g in b.graphs])
            elif b.task == "edge":
                aug = augment_with_edges(b.graph, edge_labels=b.edge_labels)
                self._features = aug.features[b.graph.num_nodes:]
            else:
                self._features = b.graph.features
        return self._features

    def predict_test(self, split, train_seed):
        model = self.config.model
        C = self.bundle.num_classes
        self.last_fit = None
        if model == "dcnn":
            cfg = self.config.train.replace(rng_seed=train_seed)
            result = train_entities(self.inputs(), self.labels, split.train,
                                    split.val, C, cfg)
            self.last_fit = result
            return predict_entities(self.inputs(), result.params, split.test,
                                    cfg.output_nonlinearity)
        if model in baselines.KERNEL_KINDS:
            fam = self.family()
            y_train = self.labels[split.train]

            def vote(alpha, query):
                sim = fam.block(alpha, query, split.train)
                return np.argmax(baselines.kernel_votes(sim, y_train, C), axis=1)

            scores = [np.mean(vote(a, split.val) == self.labels[split.val])
                      for a in baselines.ALPHA_GRID]
            alpha = baselines.ALPHA_GRID[int(np.argmax(scores))]
            return vote(alpha, split.test)
        penalty = "l1" if model == "l1logistic" else "l2"
        X = self.features()
        best, best_acc, fitted = None, -1.0, None
        # strongest penalty first so each fit warm-starts the next
        for lam in sorted(baselines.LAMBDA_GRID, reverse=True):
            fitted = baselines.logistic_train(X[split.train], self.labels[split.train],
                                              penalty, lam, C, init=fitted)
            acc = np.mean(baselines.logistic_predict(fitted, X[split.val])
                          == self.labels[split.val])
            if acc > best_acc:
                best, best_acc = fitted, acc
        return baselines.logistic_predict(best, X[split.test])


def checkpoint_dir(config: ExperimentConfig) -> Path:
    """Where per-trial DCNN parameters and training histories are written."""
    return Path(config.out) / "checkpoints" / f"hops_{config.hops}_fraction_{config.fraction:g}"


def run_trials(config: ExperimentConfig, bundle=None) -> TrialReport:
    """Repeat split / fit / evaluate ``config.trials`` times.

    With ``config.out`` set, each DCNN trial also leaves its best parameters
    (``trial_<i>.params``) and per-epoch history (``trial_<i>_history.csv``)
    in :func:`checkpoint_dir`.
    """
    bundle = load_dataset(config.dataset if bundle is None else bundle)
    runner = _Runner(bundle, config)
    report = TrialReport(config=config.echo() | {"task": bundle.task,
                                                   "dataset_name": bundle.name})
    for i, (split_seed, train_seed) in enumerate(trial_seeds(config.seed, config.trials)):
        split = make_splits(bundle.population, config.protocol, split_seed,
                            config.fraction)
        try:
            pred = runner.predict_test(split, train_seed)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d failed: %s", i, exc)
            report.failed.append({"trial": i, "error": f"{type(exc).__name__}: {exc}"})
            continue
        acc, micro, macro = evaluate_metrics(pred, runner.labels[split.test],
                                             bundle.num_classes)
        if abs(micro - acc) >= 1e-12:
            raise AssertionError(f"micro-F1 {micro} differs from accuracy {acc}")
        report.add(acc, micro, macro)
        if config.out and runner.last_fit is not None:
            ckpt = checkpoint_dir(config)
            ckpt.mkdir(parents=True, exist_ok=True)
            runner.last_fit.params.save(ckpt / f"trial_{i:02d}.params")
            runner.last_fit.write_history(ckpt / f"trial_{i:02d}_history.csv")
        log.info("trial %d: accuracy %.4f macro-F1 %.4f", i, acc, macro)
    return report


def run_node_trials(config: ExperimentConfig, bundle=None) -> TrialReport:
    bundle = load_dataset(config.dataset if bundle is None else bundle)
    if bundle.task != "node":
        raise ValueError(f"{bundle.name} is a {bundle.task}-classification dataset")
    return run_trials(config, bundle)


def run_graph_trials(config: ExperimentConfig, bundle=None) -> TrialReport:
    bundle = load_dataset(config.dataset if bundle is None else bundle)
    if bundle.task != "graph":
        raise ValueError(f"{bundle.name} is a {bundle.task}-classification dataset")
    return run_trials(config, bundle)


def run_learning_curve(config: ExperimentConfig, fractions, bundle=None):
    """One report per training fraction under the 10%/10% learning-curve split."""
    bundle = load_dataset(config.dataset if bundle is None else bundle)
    fractions = list(fractions)
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    return [(f, run_trials(replace(config, protocol="learning-curve", fraction=f),
                           bundle))
            for f in fractions]


def hop_sweep(config: ExperimentConfig, hop_values, bundle=None):
    """One report per diffusion depth, sharing trial seeds across depths."""
    bundle = load_dataset(config.dataset if bundle is None else bundle)
    hop_values = list(hop_values)
    if not hop_values or any(h < 0 for h in hop_values):
        raise ValueError("hop values must be a nonempty list of nonnegative ints")
    return [(h, run_trials(replace(config, hops=h), bundle)) for h in hop_values]
