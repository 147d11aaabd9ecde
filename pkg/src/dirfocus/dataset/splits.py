"""Constrained leave-one-out cross-validation.

Five paradigms are provided, each as a splitter class with ``split`` and
``get_n_splits`` in the scikit-learn style, and through :func:`make_splits`:

LOTO
    Trial-level hold-out. Every fold takes ``test_per_subject`` trials and
    ``val_per_subject`` trials from every subject; the rest trains.
LOSO
    Subject ``k`` is the test set of fold ``k``; the next subject in order is
    the validation set; nobody else's trials are held out.
LOMTO
    LOTO, and training additionally loses every trial whose ``trial_order``
    is adjacent (distance 1) to a validation or test trial of the same subject.
LOCTO
    Every evaluation subject contributes the test trials of exactly one class
    and the validation trials of one other class; evaluation subjects within
    a fold use distinct classes. None of that subject's trials with those
    classes remain in training. The fold family's test sets cover every class.
LOATO
    As LOCTO with ``attended_audio_id`` in place of the class label.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .trials import EXCLUDED, EegTrial, LabelParadigm, label_trial

__all__ = [
    "CvParadigm",
    "Fold",
    "FoldPlan",
    "InfeasibleSplitError",
    "LeaveOneTrialOut",
    "LeaveOneSubjectOut",
    "LeaveOneMomentTrialOut",
    "LeaveOneClassTrialOut",
    "LeaveOneAudioTrialOut",
    "make_splits",
    "audit_fold_plan",
]


class InfeasibleSplitError(ValueError):
    """The trial set cannot satisfy a paradigm's constraints."""

    def __init__(self, constraint: str, detail: str):
        self.constraint = constraint
        super().__init__(f"infeasible split ({constraint}): {detail}")


class CvParadigm(enum.Enum):
    LOTO = "LOTO"
    LOSO = "LOSO"
    LOMTO = "LOMTO"
    LOCTO = "LOCTO"
    LOATO = "LOATO"

    @classmethod
    def parse(cls, value) -> "CvParadigm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown CV paradigm {value!r}") from None


@dataclass(frozen=True)
class Fold:
    train: frozenset
    validation: frozenset
    test: frozenset

    def __post_init__(self):
        if self.train & self.validation or self.train & self.test or self.validation & self.test:
            raise ValueError("train, validation and test sets overlap")


@dataclass(frozen=True)
class FoldPlan:
    paradigm: CvParadigm
    folds: tuple

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, i) -> Fold:
        return self.folds[i]


def _by_subject(trials) -> dict:
    groups = defaultdict(list)
    for t in trials:
        groups[t.subject_id].append(t)
    return {s: sorted(ts, key=lambda t: t.trial_order) for s, ts in sorted(groups.items())}


def _check_unique_ids(trials):
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise ValueError("trial ids must be unique across the dataset")


def _labels(trials, label_paradigm) -> dict:
    return {t.trial_id: label_trial(t.attended_direction, label_paradigm) for t in trials}


def _retained(trials, label_paradigm):
    """Drop trials the labeling paradigm excludes."""
    if label_paradigm is None:
        return list(trials)
    return [t for t in trials if label_trial(t.attended_direction, label_paradigm) is not EXCLUDED]


def _require_test_classes_trained(folds, labels, constraint):
    for k, fold in enumerate(folds):
        trained = {labels[i] for i in fold.train}
        missing = {labels[i] for i in fold.test} - trained
        if missing:
            raise InfeasibleSplitError(
                constraint, f"fold {k} tests class(es) {sorted(missing)} that no training trial carries"
            )


class _Splitter:
    paradigm: CvParadigm

    def __init__(self, label_paradigm=LabelParadigm.FULL14, random_state=0):
        self.label_paradigm = label_paradigm
        self.random_state = random_state

    def _prepare(self, trials):
        trials = _retained(trials, None if self.label_paradigm is None else LabelParadigm.parse(self.label_paradigm))
        if not trials:
            raise InfeasibleSplitError("non-empty", "no trials left after label exclusion")
        _check_unique_ids(trials)
        return trials

    def split(self, trials) -> Iterable[Fold]:
        return iter(self.plan(trials).folds)

    def get_n_splits(self, trials) -> int:
        return len(self.plan(trials))

    def plan(self, trials) -> FoldPlan:
        trials = self._prepare(trials)
        folds = self._folds(trials)
        if self.label_paradigm is not None:
            _require_test_classes_trained(
                folds, _labels(trials, LabelParadigm.parse(self.label_paradigm)), f"{self.paradigm.value} class coverage"
            )
        return FoldPlan(self.paradigm, tuple(folds))

    def _folds(self, trials) -> list:
        raise NotImplementedError


class LeaveOneTrialOut(_Splitter):
    """Trial-level hold-out across all subjects.

    Parameters
    ----------
    n_folds : int, optional
        Defaults to as many folds as it takes for every trial of the smallest
        subject to be tested once.
    test_per_subject, val_per_subject : int
        Held-out trials per subject and fold.
    """

    paradigm = CvParadigm.LOTO

    def __init__(self, n_folds=None, test_per_subject=1, val_per_subject=1,
                 label_paradigm=LabelParadigm.FULL14, random_state=0):
        super().__init__(label_paradigm, random_state)
        self.n_folds = n_folds
        self.test_per_subject = test_per_subject
        self.val_per_subject = val_per_subject

    def _folds(self, trials) -> list:
        rng = np.random.default_rng(self.random_state)
        groups = _by_subject(trials)
        need = self.test_per_subject + self.val_per_subject + 1
        for s, ts in groups.items():
            if len(ts) < need:
                raise InfeasibleSplitError(
                    "LOTO hold-out", f"subject {s} has {len(ts)} trials, needs at least {need}"
                )
        max_folds = min(len(ts) for ts in groups.values()) // self.test_per_subject
        n_folds = max_folds if self.n_folds is None else int(self.n_folds)
        if not 1 <= n_folds <= max_folds:
            raise InfeasibleSplitError("LOTO hold-out", f"n_folds={n_folds} outside [1, {max_folds}]")

        orders = {s: [ts[i].trial_id for i in rng.permutation(len(ts))] for s, ts in groups.items()}
        folds = []
        for k in range(n_folds):
            test, val = set(), set()
            for ids in orders.values():
                n = len(ids)
                start = k * self.test_per_subject
                test.update(ids[start:start + self.test_per_subject])
                val.update(ids[(start + self.test_per_subject + j) % n] for j in range(self.val_per_subject))
            train = {t.trial_id for t in trials} - test - val
            folds.append(self._finish(trials, train, val, test))
        return folds

    def _finish(self, trials, train, val, test) -> Fold:
        return Fold(frozenset(train), frozenset(val), frozenset(test))


class LeaveOneMomentTrialOut(LeaveOneTrialOut):
    """LOTO without training trials adjacent in time to held-out ones."""

    paradigm = CvParadigm.LOMTO

    def __init__(self, n_folds=None, test_per_subject=1, val_per_subject=1, adjacency=1,
                 label_paradigm=LabelParadigm.FULL14, random_state=0):
        super().__init__(n_folds, test_per_subject, val_per_subject, label_paradigm, random_state)
        self.adjacency = adjacency

    def _finish(self, trials, train, val, test) -> Fold:
        held = {}
        for t in trials:
            if t.trial_id in val or t.trial_id in test:
                held.setdefault(t.subject_id, []).append(t.trial_order)
        drop = set()
        for t in trials:
            if t.trial_id in train:
                orders = held.get(t.subject_id, ())
                if any(0 < abs(t.trial_order - o) <= self.adjacency for o in orders):
                    drop.add(t.trial_id)
        return Fold(frozenset(train - drop), frozenset(val), frozenset(test))


class LeaveOneSubjectOut(_Splitter):
    """One subject tests, the next one (cyclically) validates."""

    paradigm = CvParadigm.LOSO

    def _folds(self, trials) -> list:
        groups = _by_subject(trials)
        subjects = list(groups)
        if len(subjects) < 3:
            raise InfeasibleSplitError("LOSO subjects", f"needs at least 3 subjects, got {len(subjects)}")
        folds = []
        for k, s in enumerate(subjects):
            v = subjects[(k + 1) % len(subjects)]
            test = {t.trial_id for t in groups[s]}
            val = {t.trial_id for t in groups[v]}
            train = {t.trial_id for t in trials} - test - val
            folds.append(Fold(frozenset(train), frozenset(val), frozenset(test)))
        return folds


class _LeaveOneKeyTrialOut(_Splitter):
    """Shared construction for LOCTO and LOATO.

    Fold ``k`` walks the subjects in a seeded order rotated by ``k``. Each
    subject proposes test keys starting from a rotating offset and takes the
    first (test key, validation key) pair that no earlier subject in the fold
    claimed; when no pair is free the subject sits the fold out and only
    contributes training trials.
    """

    def __init__(self, n_folds=None, max_eval_subjects=None,
                 label_paradigm=LabelParadigm.FULL14, random_state=0):
        super().__init__(label_paradigm, random_state)
        self.n_folds = n_folds
        self.max_eval_subjects = max_eval_subjects

    def _key(self, trial, labels):
        raise NotImplementedError

    def _folds(self, trials) -> list:
        label_paradigm = LabelParadigm.parse(self.label_paradigm)
        labels = _labels(trials, label_paradigm)
        present = set(labels.values())
        if len(present) < label_paradigm.n_classes:
            missing = sorted(set(range(label_paradigm.n_classes)) - present)
            raise InfeasibleSplitError(
                f"{self.paradigm.value} class coverage", f"classes {missing} have no trials"
            )
        rng = np.random.default_rng(self.random_state)
        groups = _by_subject(trials)
        subjects = [list(groups)[i] for i in rng.permutation(len(groups))]
        keyed = {
            s: _group_keys(ts, lambda t: self._key(t, labels)) for s, ts in groups.items()
        }
        for s, kd in keyed.items():
            if len(kd) < 2:
                raise InfeasibleSplitError(
                    f"{self.paradigm.value} hold-out", f"subject {s} has fewer than two distinct keys"
                )
        n_folds = label_paradigm.n_classes if self.n_folds is None else int(self.n_folds)
        all_ids = {t.trial_id for t in trials}

        folds, covered = [], set()
        for k in range(n_folds):
            order = subjects[k % len(subjects):] + subjects[:k % len(subjects)]
            used_test, used_val = set(), set()
            test, val, excluded = set(), set(), set()
            n_eval = 0
            for i, s in enumerate(order):
                if self.max_eval_subjects is not None and n_eval >= self.max_eval_subjects:
                    break
                choice = self._choose(keyed[s], k + i, used_test, used_val, labels, covered)
                if choice is None:
                    continue
                tk, vk = choice
                used_test.add(tk)
                used_val.add(vk)
                test.update(keyed[s][tk])
                val.update(keyed[s][vk])
                # the subject's other trials sharing an evaluation key leave training too
                excluded.update(keyed[s][tk])
                excluded.update(keyed[s][vk])
                n_eval += 1
            if not test:
                raise InfeasibleSplitError(f"{self.paradigm.value} hold-out", f"fold {k} has no test subject")
            covered.update(labels[i] for i in test)
            train = all_ids - test - val - excluded
            folds.append(Fold(frozenset(train), frozenset(val), frozenset(test)))

        missing = present - covered
        if missing:
            raise InfeasibleSplitError(
                f"{self.paradigm.value} class coverage",
                f"test sets of {n_folds} folds never cover classes {sorted(missing)}",
            )
        return folds

    @staticmethod
    def _choose(keys: dict, offset: int, used_test: set, used_val: set, labels: dict, covered: set):
        names = sorted(keys)
        n = len(names)
        rotated = [names[(offset + j) % n] for j in range(n)]
        # prefer test keys whose classes the family has not tested yet
        rotated.sort(key=lambda key: all(labels[i] in covered for i in keys[key]))
        for tk in rotated:
            if tk in used_test:
                continue
            for j in range(1, n):
                vk = names[(names.index(tk) + j) % n]
                if vk != tk and vk not in used_val:
                    return tk, vk
        return None


def _group_keys(trials, key) -> dict:
    out = defaultdict(list)
    for t in trials:
        out[key(t)].append(t.trial_id)
    return dict(out)


class LeaveOneClassTrialOut(_LeaveOneKeyTrialOut):
    paradigm = CvParadigm.LOCTO

    def _key(self, trial, labels):
        return labels[trial.trial_id]


class LeaveOneAudioTrialOut(_LeaveOneKeyTrialOut):
    paradigm = CvParadigm.LOATO

    def _key(self, trial, labels):
        return trial.attended_audio_id


_SPLITTERS = {
    CvParadigm.LOTO: LeaveOneTrialOut,
    CvParadigm.LOSO: LeaveOneSubjectOut,
    CvParadigm.LOMTO: LeaveOneMomentTrialOut,
    CvParadigm.LOCTO: LeaveOneClassTrialOut,
    CvParadigm.LOATO: LeaveOneAudioTrialOut,
}


def make_splits(trials, paradigm, rng_seed=0, label_paradigm=LabelParadigm.FULL14, **options) -> FoldPlan:
    """Build the fold plan for ``paradigm`` over ``trials``.

    Trials excluded by ``label_paradigm`` are dropped first. Extra keyword
    options go to the paradigm's splitter class (for example ``n_folds``).
    """
    cls = _SPLITTERS[CvParadigm.parse(paradigm)]
    return cls(label_paradigm=label_paradigm, random_state=rng_seed, **options).plan(trials)


def audit_fold_plan(plan: FoldPlan, trials, label_paradigm=LabelParadigm.FULL14) -> list[str]:
    """List every violated invariant of ``plan``; empty means the plan is sound."""
    label_paradigm = LabelParadigm.parse(label_paradigm)
    by_id = {t.trial_id: t for t in trials}
    labels = {i: label_trial(t.attended_direction, label_paradigm) for i, t in by_id.items()}
    problems = []
    for k, f in enumerate(plan.folds):
        if f.train & f.validation or f.train & f.test or f.validation & f.test:
            problems.append(f"fold {k}: sets overlap")
        for i in f.train | f.validation | f.test:
            if labels.get(i, EXCLUDED) is EXCLUDED:
                problems.append(f"fold {k}: trial {i} is unknown or unlabeled")
        subj = lambda ids: {by_id[i].subject_id for i in ids if i in by_id}
        if plan.paradigm is CvParadigm.LOSO:
            if subj(f.train) & subj(f.validation | f.test):
                problems.append(f"fold {k}: a held-out subject also trains")
        if plan.paradigm is CvParadigm.LOMTO:
            held = defaultdict(set)
            for i in f.validation | f.test:
                held[by_id[i].subject_id].add(by_id[i].trial_order)
            for i in f.train:
                t = by_id[i]
                if {t.trial_order - 1, t.trial_order + 1} & held[t.subject_id]:
                    problems.append(f"fold {k}: training trial {i} is adjacent to a held-out trial")
        if plan.paradigm in (CvParadigm.LOCTO, CvParadigm.LOATO):
            key = (lambda i: labels[i]) if plan.paradigm is CvParadigm.LOCTO else (lambda i: by_id[i].attended_audio_id)
            for part, name in ((f.test, "test"), (f.validation, "validation")):
                per_subject = defaultdict(set)
                for i in part:
                    per_subject[by_id[i].subject_id].add(key(i))
                for s, keys in per_subject.items():
                    if len(keys) != 1:
                        problems.append(f"fold {k}: subject {s} has {len(keys)} {name} keys")
                    train_keys = {key(i) for i in f.train if by_id[i].subject_id == s}
                    if keys & train_keys:
                        problems.append(f"fold {k}: subject {s} trains on its {name} key")
                firsts = [next(iter(v)) for v in per_subject.values()]
                if len(firsts) != len(set(firsts)):
                    problems.append(f"fold {k}: two subjects share a {name} key")
    if plan.paradigm is CvParadigm.LOSO:
        tested = set().union(*(f.test for f in plan.folds)) if plan.folds else set()
        if len(tested) != sum(len(f.test) for f in plan.folds):
            problems.append("LOSO test sets overlap between folds")
        retained = {i for i, lab in labels.items() if lab is not EXCLUDED}
        if tested != retained:
            problems.append(f"LOSO tests {len(tested)} of {len(retained)} trials")
    if plan.paradigm in (CvParadigm.LOCTO, CvParadigm.LOATO):
        covered = {labels[i] for f in plan.folds for i in f.test}
        if len(covered) != label_paradigm.n_classes:
            problems.append(f"test sets cover {len(covered)} of {label_paradigm.n_classes} classes")
    return problems
