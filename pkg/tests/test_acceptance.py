"""Acceptance gate: one test per numbered claim, one pass/fail line each.

Every formula check compares the production function against an
independent reimplementation (plain Python, ``statistics`` module) or a
frozen hand-computed value, never against the function itself.  The
expensive inputs (900-clip corpus, features, trained bundles, the
cross-validation report) are session fixtures shared with the rest of
the suite, so the gate adds minutes, not tens of minutes.
"""

import json
import statistics
import time

import numpy as np

from rehabcoach import evaluation, mlp
from rehabcoach.evaluation import (
    VARIANTS,
    audit_no_leakage,
    compare_models,
    corpus_truth_streams,
    f1_score,
    voting_sweep,
)
from rehabcoach.features import (
    compensation_matrix,
    rom_features,
    wrist_accel_zero_crossings,
)
from rehabcoach.fsm import CoachState, transition_table
from rehabcoach.hybrid import (
    COMP_JOINTS,
    ModelWeights,
    assess_motion,
    frame_vote,
    hybrid_score,
    vote_stream,
)
from rehabcoach.rules import (
    DEFAULT_RULESET,
    EPSILON,
    Direction,
    clip_rule_inputs,
    fit_threshold,
    rb_score,
    tune_thresholds,
)
from rehabcoach.session import (
    CoachSession,
    SessionConfig,
    clip_frame_source,
    run_session,
)
from rehabcoach.skeleton import Exercise, Side, load_clip, smooth_clip

DEADLINE_S = 0.033
COMP_TAU = 0.15          # static per-axis compensation threshold
JOINT_COL = {"head": 0, "spine": 3, "shoulder": 6}


# ---------------------------------------------------------------------------
# 1. Formula oracles
# ---------------------------------------------------------------------------

def _manual_vote(stream, v_f):
    """Reference majority vote: per-frame window count, ties to newest."""
    out = []
    for i in range(len(stream)):
        window = stream[max(0, i - v_f + 1):i + 1]
        ones = sum(window)
        if 2 * ones > len(window):
            out.append(1)
        elif 2 * ones < len(window):
            out.append(0)
        else:
            out.append(stream[i])
    return out


def _manual_f1(y_true, y_pred):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 1)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t == 0 and p == 1)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 0)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def test_criterion_01_formula_oracles(unaffected_clips):
    rng = np.random.default_rng(20240817)

    # hybrid fusion: 24 random cases plus one frozen hand computation
    for _ in range(24):
        r1, r2 = rng.uniform(0.05, 1.0, size=2)
        p1, p2 = rng.uniform(0.0, 1.0, size=2)
        expected = (r1 * p1 + r2 * p2) / (r1 + r2)
        got = hybrid_score(p1, p2, ModelWeights(r1, r2))
        assert abs(got - expected) <= 1e-9
    frozen = hybrid_score(0.9, 0.5, ModelWeights(0.8, 0.6))
    assert abs(frozen - 0.7285714285714286) <= 1e-9

    # rule-model score: mean of per-rule scores
    for _ in range(24):
        scores = rng.uniform(0.0, 1.0, size=int(rng.integers(1, 14))).tolist()
        assert abs(rb_score(scores) - sum(scores) / len(scores)) <= 1e-9
    assert abs(rb_score((0.2, 0.4, 0.6)) - 0.4) <= 1e-9

    # frame voting: every prefix of 24 random streams, plus tie cases
    for _ in range(24):
        stream = rng.integers(0, 2, size=int(rng.integers(1, 61))).tolist()
        v_f = int(rng.integers(1, 31))
        manual = _manual_vote(stream, v_f)
        for i in range(len(stream)):
            assert frame_vote(stream[:i + 1], v_f) == manual[i]
        assert vote_stream(stream, v_f).tolist() == manual
    assert frame_vote([1, 0], 2) == 0   # tie resolves to the newest label
    assert frame_vote([0, 1], 2) == 1

    # F1: 24 random label pairs plus frozen and degenerate cases
    for _ in range(24):
        n = int(rng.integers(1, 41))
        y_true = rng.integers(0, 2, size=n).tolist()
        y_pred = rng.integers(0, 2, size=n).tolist()
        assert abs(f1_score(y_true, y_pred) - _manual_f1(y_true, y_pred)) <= 1e-9
    assert abs(f1_score([1, 1, 0, 0, 1], [1, 0, 0, 1, 1]) - 4 / 6) <= 1e-9
    assert f1_score([0, 0], [0, 0]) == 0.0

    # threshold tuning: Gaussian MLE with tau = mu +/- k*sigma
    for i in range(24):
        samples = rng.uniform(0.0, 1.0, size=int(rng.integers(2, 11))).tolist()
        k = 2 if i % 2 == 0 else 3
        direction = Direction.AT_MOST if i % 4 < 2 else Direction.AT_LEAST
        mu = statistics.mean(samples)
        sigma = statistics.pstdev(samples)
        if direction is Direction.AT_MOST:
            expected = mu + k * sigma
        else:
            expected = mu - k * sigma
            if expected <= 0:
                expected = EPSILON
        got = fit_threshold(samples, k, direction)
        assert abs(got.tau - expected) <= 1e-9
        assert abs(got.mu - mu) <= 1e-9
        assert abs(got.sigma - sigma) <= 1e-9
    frozen = fit_threshold([0.10, 0.12, 0.14], 2, Direction.AT_MOST)
    assert abs(frozen.tau - 0.15265986323710904) <= 1e-9
    frozen = fit_threshold([0.10, 0.12, 0.14], 2, Direction.AT_LEAST)
    assert abs(frozen.tau - 0.08734013676289096) <= 1e-9

    # whole-profile tuning: 39 rule thresholds recomputed by hand
    profile = tune_thresholds("S03", unaffected_clips, k=2)
    samples: dict[tuple[str, str], list[float]] = {}
    for clip in unaffected_clips:
        inputs = clip_rule_inputs(smooth_clip(clip))
        for rule in DEFAULT_RULESET.select(clip.exercise):
            samples.setdefault((clip.exercise.value, rule.rule_id),
                               []).append(inputs[rule.rule_id].x)
    assert len(samples) == 39
    for (ex, rule_id), vals in samples.items():
        rule = DEFAULT_RULESET.by_id(rule_id)
        mu = statistics.mean(vals)
        sigma = statistics.pstdev(vals)
        if rule.direction is Direction.AT_MOST:
            expected = mu + 2 * sigma
        else:
            expected = max(mu - 2 * sigma, EPSILON)
        assert abs(profile.entries[(ex, rule_id)].tau - expected) <= 1e-9


# ---------------------------------------------------------------------------
# 2. Feature-count conformance
# ---------------------------------------------------------------------------

def test_criterion_02_feature_counts(corpus_features):
    assert len(corpus_features) == 900
    for cf in corpus_features:
        assert cf.rom_vec.shape == (30,), cf.path
        assert cf.smooth_vec.shape == (60,), cf.path
        assert cf.comp_mat.ndim == 2 and cf.comp_mat.shape[1] == 9, cf.path


# ---------------------------------------------------------------------------
# 3. Generator-oracle consistency
# ---------------------------------------------------------------------------

def test_criterion_03_generator_oracle_consistency(corpus):
    """Pipeline-derived labels equal the generator's on all 900 clips.

    The derivation is independent of the generator's own bookkeeping:
    range of motion from the smoothed wrist-to-target distance, tremor
    from smoothed wrist acceleration zero-crossing rates, posture from
    raw per-joint displacement against the subject's envelope.
    """
    axes = ("x", "y", "z")
    bad = []
    frames_checked = 0
    for entry in corpus.entries:
        clip = load_clip(corpus.root / entry.path)
        subject = corpus.subjects[entry.subject_id]
        smoothed = smooth_clip(clip)

        dist = rom_features(smoothed, entry.arm).column("wrist_target_dist")
        derived_rom = 1 if dist.min() <= 0.15 * dist[0] else 0
        zcr = wrist_accel_zero_crossings(smoothed, entry.arm)
        derived_smooth = 1 if max(zcr.values()) <= 0.2 else 0

        comp = np.abs(compensation_matrix(clip, entry.arm).values)
        truth = clip.labels.comp_array()
        derived_comp = np.ones_like(truth)
        for ji, joint in enumerate(COMP_JOINTS):
            over = np.zeros(clip.n_frames, dtype=bool)
            for ai, axis in enumerate(axes):
                env = subject.env(joint, axis)
                over |= comp[:, 3 * ji + ai] > env + COMP_TAU
            derived_comp[over, ji] = 0

        if derived_rom != clip.labels.rom:
            bad.append((entry.path, "rom"))
        if derived_smooth != clip.labels.smoothness:
            bad.append((entry.path, "smoothness"))
        if not np.array_equal(derived_comp, truth):
            bad.append((entry.path, "compensation"))
        frames_checked += truth.shape[0]
    assert not bad, f"{len(bad)} label mismatches, first: {bad[:5]}"
    assert frames_checked > 100_000


# ---------------------------------------------------------------------------
# 4. Personalization direction
# ---------------------------------------------------------------------------

def test_criterion_04_personalization_direction(loso_report):
    cmp = compare_models(loso_report, "rb-tuned", "rb-init")
    assert cmp.n_folds == 15
    assert cmp.delta >= 0.10, f"tuned gain {cmp.delta:.4f} below 0.10"
    assert cmp.t_stat > 0
    assert cmp.p_two_sided < 0.05, f"p={cmp.p_two_sided:.2e}"


# ---------------------------------------------------------------------------
# 5. Hybrid direction and constituent agreement
# ---------------------------------------------------------------------------

def test_criterion_05_hybrid_direction(loso_report, corpus, trained_models):
    assert (loso_report.variant_mean("hm-tuned")
            >= loso_report.variant_mean("hm-init"))

    # Whenever both constituent probabilities fall on the same side of
    # the decision threshold, the fused assessment must take that side.
    # The fusion consumes the two probabilities, so sides are read off
    # p_ml and p_rb; checked for every verdict and every frame of every
    # affected clip, and the fused probability is re-derived alongside.
    agree_cases = 0
    for entry in corpus.select(side=Side.AFFECTED):
        clip = load_clip(corpus.root / entry.path)
        bundle = trained_models[entry.exercise.value]
        out = assess_motion(clip, bundle, arm=entry.arm)

        for verdict in (out.rom, out.smoothness):
            w = bundle.weight(verdict.component)
            fused = (w.rho_ml * verdict.p_ml + w.rho_rb * verdict.p_rb) \
                / (w.rho_ml + w.rho_rb)
            assert abs(verdict.p - fused) <= 1e-9
            ml_side = verdict.p_ml >= 0.5
            rb_side = verdict.p_rb >= 0.5
            if ml_side == rb_side:
                agree_cases += 1
                assert verdict.label == int(ml_side), (entry.path,
                                                       verdict.component)

        w = bundle.weight("compensation")
        comp_sm = compensation_matrix(smooth_clip(clip), entry.arm).values
        for joint in COMP_JOINTS:
            track = out.comp[joint]
            base = JOINT_COL[joint]
            x = np.abs(comp_sm[:, base:base + 3])
            p_rb = np.minimum(COMP_TAU / np.maximum(x, EPSILON),
                              1.0).mean(axis=1)
            fused = (w.rho_ml * track.p_ml + w.rho_rb * p_rb) \
                / (w.rho_ml + w.rho_rb)
            assert np.abs(track.p - fused).max() <= 1e-9
            agree = (track.p_ml >= 0.5) == (p_rb >= 0.5)
            agree_cases += int(agree.sum())
            expected = (track.p_ml[agree] >= 0.5).astype(np.int64)
            assert np.array_equal(track.label_raw[agree], expected), \
                (entry.path, joint)
    assert agree_cases > 100_000


# ---------------------------------------------------------------------------
# 6. Voting direction under flip noise
# ---------------------------------------------------------------------------

def test_criterion_06_voting_direction(corpus):
    streams = corpus_truth_streams(corpus)
    assert len(streams) == 1350
    sweep = voting_sweep(streams, windows=(1, 29), flip_p=0.2,
                         n_seeds=50, seed=0)
    assert sweep.n_seeds == 50
    assert sweep.mean_f1[29] > sweep.mean_f1[1], sweep.mean_f1
    assert sweep.p_one_sided < 0.01, f"p={sweep.p_one_sided:.2e}"


# ---------------------------------------------------------------------------
# 7. Classifier sanity
# ---------------------------------------------------------------------------

def _blobs(n, seed, sep=4.0, d=8):
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, size=(n, d))
    y = (rng.random(n) < 0.5).astype(np.int64)
    X[y == 1, 0] += sep
    return X, y


def test_criterion_07_classifier_sanity():
    X, y = _blobs(n=120, seed=0)
    config = mlp.MlpConfig(hidden=(16,), lr=0.005, seed=4)
    model = mlp.train(X, y, config)

    assert mlp.gradient_check(model, X, y) <= 1e-4

    assert f1_score(y, mlp.predict(model, X)) >= 0.95
    X_new, y_new = _blobs(n=200, seed=1)
    assert f1_score(y_new, mlp.predict(model, X_new)) >= 0.95

    again = mlp.train(X.copy(), y.copy(), config)
    for w_a, w_b in zip(model.weights, again.weights):
        assert w_a.tobytes() == w_b.tobytes()
    for b_a, b_b in zip(model.biases, again.biases):
        assert b_a.tobytes() == b_b.tobytes()
    p_a = mlp.predict_proba(model, X_new)
    p_b = mlp.predict_proba(again, X_new)
    assert p_a.tobytes() == p_b.tobytes()


# ---------------------------------------------------------------------------
# 8. Real-time budget
# ---------------------------------------------------------------------------

def test_criterion_08_realtime_budget(corpus, trained_models):
    subject = corpus.subjects["S00"]
    clips = []
    for exercise in Exercise:
        entries = corpus.select(subject_id="S00", exercise=exercise,
                                side=Side.AFFECTED)[:4]
        clips.extend(load_clip(corpus.root / e.path) for e in entries)
    config = SessionConfig(subject_id="S00",
                           prescription=tuple((ex, 4) for ex in Exercise),
                           arm=subject.arm_for(Side.AFFECTED))
    session = CoachSession(config, models=trained_models)
    session.begin()
    frame_times = []
    for clip in clips:
        session.confirm_ready()
        session.start_cue()
        for frame in clip.frames:
            t0 = time.perf_counter()
            session.push_frame(frame)
            frame_times.append(time.perf_counter() - t0)
        session.end_motion()
    assert session.done
    times = np.asarray(frame_times)
    assert times.shape[0] > 1_000
    within = float((times <= DEADLINE_S).mean())
    assert within >= 0.99, f"only {within:.4f} of frames met the deadline"
    assert float(np.median(times)) <= DEADLINE_S


# ---------------------------------------------------------------------------
# 9. Coaching state machine conformance
# ---------------------------------------------------------------------------

def test_criterion_09_fsm_conformance(arm, comp2_clip):
    config = SessionConfig(subject_id="S03",
                           prescription=((Exercise.E1, 1),),
                           arm=arm, demo_requested=True)
    log = run_session(config, clip_frame_source([comp2_clip]))

    all_states = {s.value for s in CoachState}
    assert len(all_states) == 10
    assert {e["state"] for e in log.events} == all_states

    corrective = log.feedback("corrective")
    assert corrective
    assert all(e["state"] in ("movement", "correction") for e in corrective)

    # exhaustive search: every state must have a path to wrap-up
    table = transition_table()
    adjacency: dict[CoachState, set[CoachState]] = {s: set() for s in CoachState}
    for (src, _), path in table.items():
        adjacency[src].update(path)
        for hop in path[:-1]:
            adjacency[hop].add(path[-1])
    for start in CoachState:
        seen = {start}
        frontier = [start]
        while frontier:
            state = frontier.pop()
            for nxt in adjacency[state]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        assert CoachState.WRAP_UP in seen, f"no path from {start}"

    rerun = run_session(config, clip_frame_source([comp2_clip]))
    assert rerun == log
    assert json.dumps(rerun.events) == json.dumps(log.events)


# ---------------------------------------------------------------------------
# 10. No-leakage audit
# ---------------------------------------------------------------------------

def test_criterion_10_no_leakage(loso_report):
    assert audit_no_leakage(loso_report) == []
    assert set(loso_report.folds) == set(VARIANTS)
    for variant in VARIANTS:
        folds = loso_report.folds[variant]
        assert len(folds) == 15
        for fold in folds:
            assert fold.test_subject not in fold.train_subjects
            assert not set(fold.tune_paths) & set(fold.test_paths)
