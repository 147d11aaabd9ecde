"""Cross-validated experiment runner behind ``dirfocus run``."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset.io import load_dataset
from .dataset.splits import CvParadigm, FoldPlan, make_splits
from .dataset.synth import SynthConfig, synth_generate
from .dataset.trials import LabelParadigm, segment_trial
from .evaluation import bootstrap_significance, chance_samples, dual_null_test
from .models.architectures import ModelKind, ModelSpec, build_model
from .models.training import FoldData, evaluate_split, train_fold
from .nn.checkpoint import save_checkpoint
from .nn.optim import TrainConfig

__all__ = ["ExperimentConfig", "ExperimentError", "load_trials", "run_experiment", "fold_seeds"]

log = logging.getLogger(__name__)

RESULTS_JSON = "results.json"
RESULTS_CSV = "results.csv"


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Everything ``dirfocus run`` needs, loadable from JSON.

    Exactly one of ``dataset`` (a directory with ``manifest.json``) and
    ``synth`` (:class:`SynthConfig` fields) must be given. ``model`` holds
    :class:`ModelSpec` fields; ``n_classes`` and ``window_samples`` are
    derived from the label paradigm and the window length. ``eval`` takes
    ``n_boot``, ``alpha`` and ``eeg_twin`` (train the EEG-only twin of a
    dual-modal model on the same folds for the dual-null test).
    """

    name: str = "experiment"
    dataset: str | None = None
    synth: dict | None = None
    label_paradigm: str = "Full14"
    cv_paradigm: str = "LOSO"
    cv_options: dict = field(default_factory=dict)
    window_seconds: float = 1.0
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    output_dir: str = "results"
    rng_seed: int = 0

    def __post_init__(self):
        if (self.dataset is None) == (self.synth is None):
            raise ExperimentError("config needs exactly one of 'dataset' and 'synth'")
        if self.dataset is not None and not (Path(self.dataset) / "manifest.json").is_file():
            raise ExperimentError(f"dataset {self.dataset} has no manifest.json")
        LabelParadigm.parse(self.label_paradigm)
        CvParadigm.parse(self.cv_paradigm)
        if self.window_seconds <= 0:
            raise ExperimentError("window_seconds must be positive")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ExperimentError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ExperimentError(f"{path}: malformed JSON ({exc})") from exc
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExperimentError(f"{path}: unknown config keys {sorted(unknown)}")
        if raw.get("dataset") is not None and not Path(raw["dataset"]).is_absolute():
            raw["dataset"] = str((path.parent / raw["dataset"]).resolve())
        return cls(**raw)

    @property
    def labels(self) -> LabelParadigm:
        return LabelParadigm.parse(self.label_paradigm)

    def model_spec(self, kind=None) -> ModelSpec:
        fields = dict(self.model)
        if kind is not None:
            fields["kind"] = kind
        fields["n_classes"] = self.labels.n_classes
        fields["window_samples"] = int(round(self.window_seconds * 128))
        return ModelSpec.from_dict(fields)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def to_dict(self) -> dict:
        return asdict(self)


def load_trials(config: ExperimentConfig):
    if config.synth is not None:
        return synth_generate(SynthConfig(**config.synth), config.rng_seed)
    return load_dataset(config.dataset)


def fold_seeds(master_seed: int, n_folds: int) -> list[int]:
    """Independent per-fold seeds; the same for any completion order."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(n_folds)]


def _train_and_test(spec: ModelSpec, train_cfg: TrainConfig, fold, samples, seed: int, ckpt_path=None) -> dict:
    data = FoldData(fold, samples)
    model = build_model(spec, seed)
    cfg = TrainConfig(**{**train_cfg.to_dict(), "rng_seed": seed})
    result = train_fold(model, data, cfg)
    ev, _, _ = evaluate_split(model, data, "test")
    data.audit.assert_clean()
    if ckpt_path is not None:
        save_checkpoint(ckpt_path, model, {"spec": spec.to_dict(), "seed": seed})
    return {
        "balanced_acc": ev.balanced_acc,
        "n_test": int(ev.n_samples.sum()),
        "confusion": ev.confusion.tolist(),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "test_reads": int(data.audit.reads["test"]),
    }


def _run_fold(args) -> dict:
    k, spec, twin_spec, train_cfg, fold, samples, seed, out_dir = args
    record = {
        "fold": k,
        "n_train_trials": len(fold.train),
        "n_validation_trials": len(fold.validation),
        "n_test_trials": len(fold.test),
    }
    ckpt = None if out_dir is None else Path(out_dir) / "checkpoints" / f"fold_{k:02d}"
    record["model"] = _train_and_test(spec, train_cfg, fold, samples, seed, ckpt)
    if twin_spec is not None:
        twin_ckpt = None if ckpt is None else ckpt.with_name(ckpt.name + "_twin")
        record["eeg_twin"] = _train_and_test(twin_spec, train_cfg, fold, samples, seed, twin_ckpt)
    return record


def _fold_file(out: Path, k: int) -> Path:
    return out / "folds" / f"fold_{k:02d}.json"


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1, resume: bool = False,
                   trials=None) -> dict:
    """Train and test one model per fold, then run the statistics.

    Per-fold records land in ``<out>/folds`` as they finish, so ``resume``
    can skip completed folds. Aggregation always walks folds in index order.
    Raises :class:`ExperimentError` if any fold fails; completed folds stay
    on disk.
    """
    out = Path(out_dir or config.output_dir)
    (out / "folds").mkdir(parents=True, exist_ok=True)
    labels = config.labels
    spec = config.model_spec()
    eval_cfg = {"n_boot": 10_000, "alpha": 0.05, "eeg_twin": True, **config.eval}
    twin_spec = None
    if spec.kind.uses_spectrum and eval_cfg["eeg_twin"]:
        twin_spec = config.model_spec(spec.kind.eeg_twin)
    train_cfg = config.train_config()

    if trials is None:
        trials = load_trials(config)
    plan: FoldPlan = make_splits(trials, config.cv_paradigm, config.rng_seed, labels, **config.cv_options)
    if spec.kind.uses_spectrum and any(t.spectrum is None for t in trials):
        raise ExperimentError("dual-modal model but some trials have no spectrum; run `dirfocus spectrum` first")
    samples = [s for t in trials
               for s in segment_trial(t, config.window_seconds, labels, spec.kind.uses_spectrum)]
    seeds = fold_seeds(config.rng_seed, len(plan))

    records: dict[int, dict] = {}
    todo = []
    for k, fold in enumerate(plan):
        path = _fold_file(out, k)
        if resume and path.is_file():
            records[k] = json.loads(path.read_text())
            log.info("fold %d: resumed from %s", k, path)
        else:
            fold_samples = [s for s in samples if s.trial_id in fold.train | fold.validation | fold.test]
            todo.append((k, spec, twin_spec, train_cfg, fold, fold_samples, seeds[k], str(out)))

    failures = {}

    def finish(k, record):
        records[k] = record
        _fold_file(out, k).write_text(json.dumps(record, indent=1, sort_keys=True))
        log.info("fold %d: balanced accuracy %.4f", k, record["model"]["balanced_acc"])

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {args[0]: pool.submit(_run_fold, args) for args in todo}
            for k in sorted(futures):
                try:
                    finish(k, futures[k].result())
                except Exception as exc:  # noqa: BLE001 - reported per fold
                    failures[k] = repr(exc)
    else:
        for args in todo:
            try:
                finish(args[0], _run_fold(args))
            except Exception as exc:  # noqa: BLE001
                log.exception("fold %d failed", args[0])
                failures[args[0]] = repr(exc)
    if failures:
        raise ExperimentError(f"{len(failures)} fold(s) failed: {failures}")

    results = summarize(config, spec, [records[k] for k in range(len(plan))], eval_cfg)
    (out / RESULTS_JSON).write_text(json.dumps(results, indent=1, sort_keys=True))
    write_results_csv(out / RESULTS_CSV, [results])
    return results


def summarize(config: ExperimentConfig, spec: ModelSpec, folds: list[dict], eval_cfg: dict) -> dict:
    n_class = config.labels.n_classes
    acc = np.array([f["model"]["balanced_acc"] for f in folds])
    n_test = np.array([f["model"]["n_test"] for f in folds])
    ss = np.random.SeedSequence([config.rng_seed, 7]).spawn(3)
    chance = chance_samples(n_test, 1.0 / n_class, np.random.default_rng(ss[0]))
    results = {
        "name": config.name,
        "model": spec.kind.value,
        "paradigm": CvParadigm.parse(config.cv_paradigm).value,
        "label_paradigm": config.labels.value,
        "window_seconds": config.window_seconds,
        "n_class": n_class,
        "chance_level": 1.0 / n_class,
        "folds": folds,
        "balanced_acc_mean": float(acc.mean()),
        "balanced_acc_std": float(acc.std(ddof=1)) if acc.size > 1 else 0.0,
        "pooled_test_samples": int(n_test.sum()),
        "config": config.to_dict(),
    }
    if acc.size >= 5:
        vs_chance = bootstrap_significance(acc, chance, eval_cfg["n_boot"], ss[1], eval_cfg["alpha"])
        results["vs_chance"] = vs_chance.to_dict()
        results["p95"] = vs_chance.p95_bootstrap
        results["stars"] = vs_chance.stars
        if spec.kind.uses_spectrum and "eeg_twin" in folds[0]:
            twin = np.array([f["eeg_twin"]["balanced_acc"] for f in folds])
            binary = chance_samples(n_test, 0.5, np.random.default_rng(ss[2]))
            dual = dual_null_test(acc, twin, binary, eval_cfg["n_boot"], config.rng_seed, eval_cfg["alpha"])
            results["eeg_twin_acc_mean"] = float(twin.mean())
            results["dual_null"] = dual.to_dict()
            results["p95"] = dual.p95_bootstrap
            results["stars"] = dual.stars
    else:
        results["p95"] = None
        results["stars"] = ""
        results["note"] = "fewer than 5 folds: significance not computed"
    return results


CSV_FIELDS = ["name", "model", "paradigm", "label_paradigm", "n_class", "window_seconds",
              "balanced_acc_mean", "balanced_acc_std", "p95", "stars", "n_folds"]


def write_results_csv(path, results: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            row = {k: r.get(k) for k in CSV_FIELDS}
            row["n_folds"] = len(r["folds"])
            row["balanced_acc_mean"] = f"{r['balanced_acc_mean']:.6f}"
            row["balanced_acc_std"] = f"{r['balanced_acc_std']:.6f}"
            row["p95"] = "" if r.get("p95") is None else f"{r['p95']:.6g}"
            w.writerow(row)
