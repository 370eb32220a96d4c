"""Leave-one-subject-out evaluation of the assessment models.

Each fold holds out one subject entirely: models train on every other
subject's clips, per-user thresholds tune on the held-out subject's
unaffected-side clips only, and scoring runs on that subject's
affected-side clips.  Six variants are scored per fold:

* ``rb-init``   rule model with generic thresholds
* ``rb-tuned``  rule model with per-user tuned thresholds
* ``ml``        neural nets trained on the other subjects
* ``tuned-ml``  the same nets after one fine-tuning epoch on the held-out
                subject's unaffected clips
* ``hm-init``   F1-weighted fusion of ml and the generic rule scores
* ``hm-tuned``  the same fusion with tuned rule scores

Per-fold scores are per-(exercise, component) F1 over the positive
(performed correctly) class; compensation cells average frame-level F1
over the three monitored joints with no vote smoothing, so the voting
window is studied separately (see :func:`voting_sweep`).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import mlp, rules
from .errors import ConfigError
from .features import (compensation_matrix, rom_features, smoothness_features,
                       summarize)
from .hybrid import (COMP_JOINTS, ExerciseModels, ModelWeights, assess_motion,
                     comp_rb_track, vote_stream)
from .skeleton import Arm, Exercise, MotionClip, Side, smooth_clip
from .synth import Corpus

logger = logging.getLogger(__name__)

VARIANTS = ("rb-init", "rb-tuned", "ml", "tuned-ml", "hm-init", "hm-tuned")
COMPONENTS = ("rom", "smoothness", "compensation")
EXERCISES = (Exercise.E1, Exercise.E2, Exercise.E3)

DEFAULT_HIDDEN = (16,)
DEFAULT_LR = 0.005
DEFAULT_COMP_STRIDE = 2


def f1_score(y_true, y_pred) -> float:
    """F1 over the positive class (label 1).  Degenerate cases score 0."""
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ConfigError(
            f"f1_score length mismatch: {t.shape[0]} vs {p.shape[0]}")
    tp = int(((t == 1) & (p == 1)).sum())
    fp = int(((t == 0) & (p == 1)).sum())
    fn = int(((t == 1) & (p == 0)).sum())
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with label 1 as the positive class."""
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    tp = int(((t == 1) & (p == 1)).sum())
    fp = int(((t == 0) & (p == 1)).sum())
    fn = int(((t == 1) & (p == 0)).sum())
    tn = int(((t == 0) & (p == 0)).sum())
    return tp, fp, fn, tn


# ---------------------------------------------------------------------------
# Cached per-clip features
# ---------------------------------------------------------------------------

@dataclass
class ClipFeatures:
    """Everything a fold needs from one clip, extracted once."""

    path: str
    subject_id: str
    exercise: Exercise
    side: Side
    arm: Arm
    rom_vec: np.ndarray          # (30,) summary
    smooth_vec: np.ndarray       # (60,) summary
    comp_mat: np.ndarray         # (T, 9) from the smoothed clip
    rom_label: int
    smooth_label: int
    comp_labels: np.ndarray      # (T, 3)
    rb_rom_label: int            # generic-threshold rule opinions
    rb_smooth_label: int
    rb_comp_labels: np.ndarray   # (T, 3)


def extract_clip_features(clip: MotionClip, path: str, arm: Arm) -> ClipFeatures:
    smoothed = smooth_clip(clip)
    rom_vec = summarize(rom_features(smoothed, arm)).values
    smooth_vec = summarize(smoothness_features(smoothed, arm)).values
    comp_mat = compensation_matrix(smoothed, arm).values
    rb_rom = rules.assess_clip_component(smoothed, rules.Component.ROM, None, arm)
    rb_smooth = rules.assess_clip_component(smoothed, rules.Component.SMOOTHNESS,
                                            None, arm)
    rb_comp = np.stack(
        [comp_rb_track(comp_mat, j, clip.exercise, None)[1]
         for j in COMP_JOINTS], axis=1)
    labels = clip.labels
    if labels is None:
        raise ConfigError(f"clip {path} carries no labels")
    return ClipFeatures(
        path=path, subject_id=clip.subject_id, exercise=clip.exercise,
        side=clip.side, arm=arm,
        rom_vec=rom_vec, smooth_vec=smooth_vec, comp_mat=comp_mat,
        rom_label=labels.rom, smooth_label=labels.smoothness,
        comp_labels=labels.comp_array(),
        rb_rom_label=rb_rom.label, rb_smooth_label=rb_smooth.label,
        rb_comp_labels=rb_comp,
    )


def extract_corpus_features(corpus: Corpus,
                            progress: Callable[[str], None] | None = None
                            ) -> list[ClipFeatures]:
    out = []
    t0 = time.time()
    for i, entry in enumerate(corpus.entries):
        clip = corpus.clip(entry)
        out.append(extract_clip_features(clip, entry.path, entry.arm))
        if progress and (i + 1) % 200 == 0:
            progress(f"features {i + 1}/{len(corpus.entries)} "
                     f"({time.time() - t0:.0f}s)")
    corpus._cache.clear()
    return out


# ---------------------------------------------------------------------------
# Model fitting
# ---------------------------------------------------------------------------

def _net_seed(base: int, fold: int, exercise: Exercise, slot: int) -> int:
    ex_idx = ("E1", "E2", "E3").index(Exercise(exercise).value)
    return base + 1000 * fold + 10 * ex_idx + slot


def fit_exercise_models(exercise: Exercise, feats: Sequence[ClipFeatures],
                        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                        lr: float = DEFAULT_LR, seed: int = 0, fold: int = 0,
                        comp_stride: int = DEFAULT_COMP_STRIDE) -> ExerciseModels:
    """Train one exercise's nets and fusion weights from cached features.

    Fusion weights are the training-set F1 of each constituent: the nets'
    own predictions and the generic rule model's labels.  Tuned rule
    thresholds never feed the weights, so held-out data cannot leak in.
    """
    exercise = Exercise(exercise)
    rows = [f for f in feats if f.exercise is exercise]
    if not rows:
        raise ConfigError(f"no training clips for {exercise}")

    x_rom = np.stack([f.rom_vec for f in rows])
    y_rom = np.array([f.rom_label for f in rows])
    rom_net = mlp.train(x_rom, y_rom,
                        mlp.MlpConfig(hidden, lr, _net_seed(seed, fold, exercise, 0)))

    x_sm = np.stack([f.smooth_vec for f in rows])
    y_sm = np.array([f.smooth_label for f in rows])
    smooth_net = mlp.train(x_sm, y_sm,
                           mlp.MlpConfig(hidden, lr, _net_seed(seed, fold, exercise, 1)))

    x_comp = np.vstack([f.comp_mat[::comp_stride] for f in rows])
    comp_nets: dict[str, mlp.MlpModel] = {}
    comp_true, comp_ml, comp_rb = [], [], []
    for ji, joint in enumerate(COMP_JOINTS):
        y = np.concatenate([f.comp_labels[::comp_stride, ji] for f in rows])
        net = mlp.train(x_comp, y,
                        mlp.MlpConfig(hidden, lr,
                                      _net_seed(seed, fold, exercise, 2 + ji)))
        comp_nets[joint] = net
        comp_true.append(y)
        comp_ml.append(mlp.predict(net, x_comp))
        comp_rb.append(np.concatenate(
            [f.rb_comp_labels[::comp_stride, ji] for f in rows]))

    weights = {
        "rom": ModelWeights(
            f1_score(y_rom, mlp.predict(rom_net, x_rom)),
            f1_score(y_rom, [f.rb_rom_label for f in rows])),
        "smoothness": ModelWeights(
            f1_score(y_sm, mlp.predict(smooth_net, x_sm)),
            f1_score(y_sm, [f.rb_smooth_label for f in rows])),
        "compensation": ModelWeights(
            f1_score(np.concatenate(comp_true), np.concatenate(comp_ml)),
            f1_score(np.concatenate(comp_true), np.concatenate(comp_rb))),
    }
    return ExerciseModels(exercise, rom_net, smooth_net, comp_nets, weights)


def finetune_exercise_models(models: ExerciseModels,
                             feats: Sequence[ClipFeatures],
                             comp_stride: int = DEFAULT_COMP_STRIDE
                             ) -> ExerciseModels:
    """One extra training epoch on (typically unaffected) user clips."""
    rows = [f for f in feats if f.exercise is Exercise(models.exercise)]
    if not rows:
        raise ConfigError("no clips to fine-tune on")
    rom_net = mlp.finetune(models.rom,
                           np.stack([f.rom_vec for f in rows]),
                           np.array([f.rom_label for f in rows]))
    smooth_net = mlp.finetune(models.smoothness,
                              np.stack([f.smooth_vec for f in rows]),
                              np.array([f.smooth_label for f in rows]))
    x_comp = np.vstack([f.comp_mat[::comp_stride] for f in rows])
    comp_nets = {}
    for ji, joint in enumerate(COMP_JOINTS):
        y = np.concatenate([f.comp_labels[::comp_stride, ji] for f in rows])
        comp_nets[joint] = mlp.finetune(models.comp[joint], x_comp, y)
    return ExerciseModels(models.exercise, rom_net, smooth_net, comp_nets,
                          dict(models.weights))


def train_all_models(corpus: Corpus, hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                     lr: float = DEFAULT_LR, seed: int = 0,
                     comp_stride: int = DEFAULT_COMP_STRIDE,
                     feats: Sequence[ClipFeatures] | None = None
                     ) -> dict[str, ExerciseModels]:
    """Production bundle: one ExerciseModels per exercise, full corpus."""
    if feats is None:
        feats = extract_corpus_features(corpus)
    return {ex.value: fit_exercise_models(ex, feats, hidden, lr, seed,
                                          comp_stride=comp_stride)
            for ex in EXERCISES}


# ---------------------------------------------------------------------------
# LOSO harness
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    variant: str
    test_subject: str
    train_subjects: tuple[str, ...]
    tune_paths: tuple[str, ...]      # clips used for per-user adaptation
    test_paths: tuple[str, ...]
    cells: dict[str, float]          # "E1/rom" -> F1
    mean_f1: float

    def to_json(self) -> dict:
        return {
            "variant": self.variant, "test_subject": self.test_subject,
            "train_subjects": list(self.train_subjects),
            "tune_paths": list(self.tune_paths),
            "test_paths": list(self.test_paths),
            "cells": dict(self.cells), "mean_f1": self.mean_f1,
        }


@dataclass
class PairedComparison:
    variant_a: str
    variant_b: str
    mean_a: float
    mean_b: float
    delta: float                     # mean_a - mean_b
    t_stat: float
    p_two_sided: float
    n_folds: int

    @property
    def p_one_sided(self) -> float:
        """P(improvement of a over b is chance), small when a wins."""
        if self.t_stat > 0:
            return self.p_two_sided / 2.0
        return 1.0 - self.p_two_sided / 2.0

    def to_json(self) -> dict:
        return {
            "variant_a": self.variant_a, "variant_b": self.variant_b,
            "mean_a": self.mean_a, "mean_b": self.mean_b,
            "delta": self.delta, "t_stat": self.t_stat,
            "p_two_sided": self.p_two_sided,
            "p_one_sided": self.p_one_sided, "n_folds": self.n_folds,
        }


@dataclass
class LosoReport:
    folds: dict[str, list[FoldResult]]
    comparisons: list[PairedComparison] = field(default_factory=list)

    def fold_means(self, variant: str) -> np.ndarray:
        return np.array([f.mean_f1 for f in self.folds[variant]])

    def variant_mean(self, variant: str) -> float:
        return float(self.fold_means(variant).mean())

    def cell_mean(self, variant: str, cell: str) -> float:
        return float(np.mean([f.cells[cell] for f in self.folds[variant]]))

    def comparison(self, a: str, b: str) -> PairedComparison:
        for c in self.comparisons:
            if c.variant_a == a and c.variant_b == b:
                return c
        raise KeyError(f"no comparison {a} vs {b}")

    def to_json(self) -> dict:
        return {
            "folds": {v: [f.to_json() for f in fs]
                      for v, fs in self.folds.items()},
            "comparisons": [c.to_json() for c in self.comparisons],
            "variant_means": {v: self.variant_mean(v) for v in self.folds},
        }

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "loso_report.json").write_text(
            json.dumps(self.to_json(), indent=2), encoding="utf-8")
        cells = sorted({c for fs in self.folds.values()
                        for f in fs for c in f.cells})
        with (out_dir / "loso_folds.csv").open("w", newline="",
                                               encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "test_subject", *cells, "mean_f1"])
            for variant, fs in self.folds.items():
                for f in fs:
                    w.writerow([variant, f.test_subject,
                                *[f"{f.cells[c]:.4f}" for c in cells],
                                f"{f.mean_f1:.4f}"])


def compare_models(report: LosoReport, variant_a: str,
                   variant_b: str) -> PairedComparison:
    """Paired t-test over per-fold mean F1 of two variants."""
    a = report.fold_means(variant_a)
    b = report.fold_means(variant_b)
    if a.shape != b.shape:
        raise ConfigError("variants were scored on different folds")
    res = stats.ttest_rel(a, b)
    return PairedComparison(
        variant_a=variant_a, variant_b=variant_b,
        mean_a=float(a.mean()), mean_b=float(b.mean()),
        delta=float(a.mean() - b.mean()),
        t_stat=float(res.statistic), p_two_sided=float(res.pvalue),
        n_folds=len(a))


def audit_no_leakage(report: LosoReport) -> list[str]:
    """Cross-check fold provenance; returns problems (empty list = clean)."""
    problems = []
    for variant, fs in report.folds.items():
        for f in fs:
            if f.test_subject in f.train_subjects:
                problems.append(
                    f"{variant}/{f.test_subject}: held-out subject in "
                    f"the training set")
            for p in f.test_paths:
                if f.test_subject not in p:
                    problems.append(
                        f"{variant}/{f.test_subject}: test clip {p} is not "
                        f"the held-out subject's")
                if "unaffected" in p:
                    problems.append(
                        f"{variant}/{f.test_subject}: test clip {p} is an "
                        f"unaffected-side clip")
            overlap = set(f.tune_paths) & set(f.test_paths)
            if overlap:
                problems.append(
                    f"{variant}/{f.test_subject}: {len(overlap)} clips used "
                    f"for both tuning and testing")
            for p in f.tune_paths:
                if f.test_subject not in p:
                    problems.append(
                        f"{variant}/{f.test_subject}: tuning clip {p} is not "
                        f"the held-out subject's")
    return problems


def loso_cv(corpus: Corpus, variants: Sequence[str] = VARIANTS,
            hidden: tuple[int, ...] = DEFAULT_HIDDEN, lr: float = DEFAULT_LR,
            seed: int = 0, comp_stride: int = DEFAULT_COMP_STRIDE,
            feats: Sequence[ClipFeatures] | None = None,
            progress: Callable[[str], None] | None = None) -> LosoReport:
    """Run leave-one-subject-out evaluation over the whole corpus."""
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ConfigError(f"unknown variants: {sorted(unknown)}")
    if feats is None:
        feats = extract_corpus_features(corpus, progress)
    subjects = corpus.subject_ids()
    folds: dict[str, list[FoldResult]] = {v: [] for v in variants}

    need_ml = any(v in variants for v in ("ml", "tuned-ml", "hm-init", "hm-tuned"))
    need_profile = any(v in variants for v in ("rb-tuned", "hm-tuned"))
    need_finetuned = "tuned-ml" in variants

    for fold_i, held_out in enumerate(subjects):
        t0 = time.time()
        train_feats = [f for f in feats if f.subject_id != held_out]
        train_subjects = tuple(sorted({f.subject_id for f in train_feats}))
        tune_entries = corpus.select(subject_id=held_out, side=Side.UNAFFECTED)
        test_entries = corpus.select(subject_id=held_out, side=Side.AFFECTED)
        tune_paths = tuple(e.path for e in tune_entries)
        test_paths = tuple(e.path for e in test_entries)

        profile = None
        if need_profile:
            tune_clips = [corpus.clip(e) for e in tune_entries]
            profile = rules.build_profile(held_out, tune_clips)

        models: dict[Exercise, ExerciseModels] = {}
        models_ft: dict[Exercise, ExerciseModels] = {}
        if need_ml:
            tune_feats = [f for f in feats
                          if f.subject_id == held_out and f.side is Side.UNAFFECTED]
            for ex in EXERCISES:
                models[ex] = fit_exercise_models(ex, train_feats, hidden, lr,
                                                 seed, fold_i, comp_stride)
                if need_finetuned:
                    models_ft[ex] = finetune_exercise_models(
                        models[ex], tune_feats, comp_stride)

        # variant -> cell -> collected (y_true, y_pred) pairs
        clip_true: dict[str, dict[str, list[int]]] = {}
        clip_pred: dict[str, dict[str, list[int]]] = {
            v: {} for v in variants}
        frame_true: dict[str, dict[str, list[np.ndarray]]] = {}
        frame_pred: dict[str, dict[str, dict[str, list[np.ndarray]]]] = {
            v: {} for v in variants}

        for entry in test_entries:
            clip = corpus.clip(entry)
            ex = entry.exercise
            labels = clip.labels
            comp_truth = labels.comp_array()
            exv = ex.value

            per_variant: dict[str, tuple[int, int, np.ndarray]] = {}
            if need_ml:
                base = assess_motion(clip, models[ex], profile=None,
                                     arm=entry.arm, v_f=1)
                per_variant["rb-init"] = (
                    base.rom.rb_label, base.smoothness.rb_label,
                    np.stack([base.comp[j].rb_labels for j in COMP_JOINTS],
                             axis=1))
                per_variant["ml"] = (
                    base.rom.ml_label, base.smoothness.ml_label,
                    np.stack([(base.comp[j].p_ml >= 0.5).astype(np.int64)
                              for j in COMP_JOINTS], axis=1))
                per_variant["hm-init"] = (
                    base.rom.label, base.smoothness.label,
                    np.stack([base.comp[j].label_raw for j in COMP_JOINTS],
                             axis=1))
                if need_profile:
                    tuned = assess_motion(clip, models[ex], profile=profile,
                                          arm=entry.arm, v_f=1)
                    per_variant["rb-tuned"] = (
                        tuned.rom.rb_label, tuned.smoothness.rb_label,
                        np.stack([tuned.comp[j].rb_labels
                                  for j in COMP_JOINTS], axis=1))
                    per_variant["hm-tuned"] = (
                        tuned.rom.label, tuned.smoothness.label,
                        np.stack([tuned.comp[j].label_raw
                                  for j in COMP_JOINTS], axis=1))
                if need_finetuned:
                    ft = assess_motion(clip, models_ft[ex], profile=None,
                                       arm=entry.arm, v_f=1)
                    per_variant["tuned-ml"] = (
                        ft.rom.ml_label, ft.smoothness.ml_label,
                        np.stack([(ft.comp[j].p_ml >= 0.5).astype(np.int64)
                                  for j in COMP_JOINTS], axis=1))
            else:
                base = assess_motion(clip, None, profile=None,
                                     arm=entry.arm, v_f=1)
                per_variant["rb-init"] = (
                    base.rom.rb_label, base.smoothness.rb_label,
                    np.stack([base.comp[j].rb_labels for j in COMP_JOINTS],
                             axis=1))
                if need_profile:
                    tuned = assess_motion(clip, None, profile=profile,
                                          arm=entry.arm, v_f=1)
                    per_variant["rb-tuned"] = (
                        tuned.rom.rb_label, tuned.smoothness.rb_label,
                        np.stack([tuned.comp[j].rb_labels
                                  for j in COMP_JOINTS], axis=1))

            clip_true.setdefault(f"{exv}/rom", []).append(labels.rom)
            clip_true.setdefault(f"{exv}/smoothness", []).append(labels.smoothness)
            frame_true.setdefault(exv, {}).setdefault("truth", []).append(comp_truth)
            for v in variants:
                rom_p, sm_p, comp_p = per_variant[v]
                clip_pred[v].setdefault(f"{exv}/rom", []).append(rom_p)
                clip_pred[v].setdefault(f"{exv}/smoothness", []).append(sm_p)
                frame_pred[v].setdefault(exv, {}).setdefault("pred", []).append(comp_p)

        for v in variants:
            cells: dict[str, float] = {}
            for ex in EXERCISES:
                exv = ex.value
                for comp_name in ("rom", "smoothness"):
                    key = f"{exv}/{comp_name}"
                    cells[key] = f1_score(clip_true[key], clip_pred[v][key])
                truth = np.vstack(frame_true[exv]["truth"])
                pred = np.vstack(frame_pred[v][exv]["pred"])
                per_joint = [f1_score(truth[:, j], pred[:, j]) for j in range(3)]
                cells[f"{exv}/compensation"] = float(np.mean(per_joint))
            folds[v].append(FoldResult(
                variant=v, test_subject=held_out,
                train_subjects=train_subjects,
                tune_paths=tune_paths if v in ("rb-tuned", "hm-tuned",
                                               "tuned-ml") else (),
                test_paths=test_paths,
                cells=cells, mean_f1=float(np.mean(list(cells.values()))),
            ))
        corpus._cache.clear()
        if progress:
            progress(f"fold {held_out} done in {time.time() - t0:.1f}s")

    report = LosoReport(folds=folds)
    pairs = [("rb-tuned", "rb-init"), ("hm-tuned", "hm-init"),
             ("ml", "rb-init"), ("hm-tuned", "ml"), ("tuned-ml", "ml"),
             ("hm-init", "rb-init")]
    for a, b in pairs:
        if a in folds and b in folds:
            report.comparisons.append(compare_models(report, a, b))
    return report


# ---------------------------------------------------------------------------
# Voting window study
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    windows: tuple[int, ...]
    flip_p: float
    n_seeds: int
    mean_f1: dict[int, float]           # window -> mean over seeds
    per_seed: np.ndarray                # (n_seeds, n_windows)
    t_stat: float                       # largest vs smallest window
    p_one_sided: float

    def to_json(self) -> dict:
        return {
            "windows": list(self.windows), "flip_p": self.flip_p,
            "n_seeds": self.n_seeds,
            "mean_f1": {str(k): v for k, v in self.mean_f1.items()},
            "t_stat": self.t_stat, "p_one_sided": self.p_one_sided,
        }

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["window", "mean_f1"])
            for win in self.windows:
                w.writerow([win, f"{self.mean_f1[win]:.5f}"])


def corpus_truth_streams(corpus: Corpus) -> list[np.ndarray]:
    """Per-joint compensation truth streams from every affected clip."""
    streams = []
    for entry in corpus.select(side=Side.AFFECTED):
        comp = corpus.clip(entry).labels.comp_array()
        for j in range(3):
            streams.append(comp[:, j].copy())
    corpus._cache.clear()
    return streams


def voting_sweep(truth_streams: Sequence[np.ndarray],
                 windows: Sequence[int] = (1, 5, 9, 15, 21, 29),
                 flip_p: float = 0.2, n_seeds: int = 50,
                 seed: int = 0) -> SweepResult:
    """Majority-vote window study under synthetic label-flip noise.

    Every stream is a ground-truth 0/1 label sequence; each trial flips
    every frame independently with probability ``flip_p`` and scores the
    voted prediction against the clean truth for each window size.
    """
    if not truth_streams:
        raise ConfigError("voting_sweep needs at least one truth stream")
    windows = tuple(int(w) for w in windows)
    rng = np.random.default_rng(seed)
    per_seed = np.zeros((n_seeds, len(windows)))
    truth_cat = np.concatenate(truth_streams)
    for si in range(n_seeds):
        flipped = [np.where(rng.random(s.shape[0]) < flip_p, 1 - s, s)
                   for s in truth_streams]
        for wi, win in enumerate(windows):
            voted = np.concatenate([vote_stream(f, win) for f in flipped])
            per_seed[si, wi] = f1_score(truth_cat, voted)
    mean_f1 = {w: float(per_seed[:, i].mean()) for i, w in enumerate(windows)}
    hi = int(np.argmax(windows))
    lo = int(np.argmin(windows))
    res = stats.ttest_rel(per_seed[:, hi], per_seed[:, lo])
    t = float(res.statistic)
    p_one = float(res.pvalue) / 2.0 if t > 0 else 1.0 - float(res.pvalue) / 2.0
    return SweepResult(windows, flip_p, n_seeds, mean_f1, per_seed, t, p_one)
