"""Command-line entry points.

``coach`` runs the interactive side: serving the WebSocket protocol,
replaying recorded clips through a scripted session, tuning per-user
thresholds, generating a synthetic corpus, and training model bundles.
``coach-eval`` runs the study side: leave-one-subject-out evaluation
and the voting-window sweep.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation, synth
from .errors import CoachError
from .hybrid import VOTE_WINDOW_DEFAULT, load_models, save_models
from .rules import UserProfile
from .server import CoachServer, load_replay_clips
from .session import (ProfileStore, SessionConfig, run_session,
                      clip_frame_source, tune_user)
from .skeleton import Exercise, infer_arm, load_clip

logger = logging.getLogger(__name__)


def _hidden_arg(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def _windows_arg(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


# ---------------------------------------------------------------------------
# coach
# ---------------------------------------------------------------------------

def _cmd_serve(args: argparse.Namespace) -> int:
    models = load_models(args.models_dir) if args.models_dir else None
    profiles = ProfileStore(args.profiles_dir) if args.profiles_dir else None
    replay = load_replay_clips(args.replay) if args.replay else ()
    server = CoachServer(host=args.host, port=args.port, models=models,
                         profiles=profiles, replay_clips=replay,
                         log_dir=args.log_dir, pace=args.pace)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    clips = [load_clip(path) for path in args.clip]
    profile = None
    if args.profile:
        data = json.loads(Path(args.profile).read_text(encoding="utf-8"))
        profile = UserProfile.from_json(data)
    models = load_models(args.models_dir) if args.models_dir else None
    prescription: list[tuple[Exercise, int]] = []
    for clip in clips:
        if prescription and prescription[-1][0] is clip.exercise:
            prescription[-1] = (clip.exercise, prescription[-1][1] + 1)
        else:
            prescription.append((clip.exercise, 1))
    config = SessionConfig(subject_id=clips[0].subject_id,
                           prescription=tuple(prescription),
                           arm=infer_arm(clips[0]), v_f=args.v_f)
    log = run_session(config, clip_frame_source(clips), models=models,
                      profile=profile, log_path=args.out)
    for event in log:
        print(json.dumps(event, sort_keys=True))
    if args.out:
        print(f"# log written to {args.out}", file=sys.stderr)
    return 0


def _cmd_tune(args: argparse.Namespace) -> int:
    if args.corpus:
        corpus = synth.load_corpus(args.corpus)
        entries = corpus.select(subject_id=args.subject, side="unaffected")
        clips = [corpus.clip(e) for e in entries]
    else:
        clips = [load_clip(path) for path in args.clips]
    store = ProfileStore(args.profiles_dir)
    profile = tune_user(store, args.subject, clips, k=args.k)
    print(f"tuned {len(profile.entries)} thresholds for {args.subject} "
          f"from {len(clips)} clips -> {store.path(args.subject)}")
    return 0


def _cmd_corpus(args: argparse.Namespace) -> int:
    corpus = synth.generate_corpus(args.out, seed=args.seed,
                                   n_subjects=args.subjects,
                                   reps_per_side=args.reps)
    print(f"wrote {len(corpus.entries)} clips for "
          f"{len(corpus.subjects)} subjects under {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    corpus = synth.load_corpus(args.corpus)
    models = evaluation.train_all_models(corpus, hidden=args.hidden,
                                         lr=args.lr, seed=args.seed,
                                         comp_stride=args.comp_stride)
    save_models(models, args.out)
    for key, bundle in sorted(models.items()):
        weights = {name: round(w.rho_ml, 4)
                   for name, w in bundle.weights.items()}
        print(f"{key}: trained, model F1 weights {weights}")
    print(f"bundles saved under {args.out}")
    return 0


def coach_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coach",
        description="Real-time exercise coaching service and tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the WebSocket session protocol")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--models-dir", default=None,
                   help="trained model bundles; rule-only when omitted")
    p.add_argument("--profiles-dir", default=None,
                   help="per-subject tuned threshold profiles")
    p.add_argument("--replay", nargs="+", default=None, metavar="CLIP",
                   help="serve frames from these recorded clips instead "
                        "of expecting a live sensor")
    p.add_argument("--log-dir", default=None,
                   help="persist one session log per connection here")
    p.add_argument("--pace", action="store_true",
                   help="replay at sensor rate instead of full speed")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("replay", help="run a scripted session from clips")
    p.add_argument("--clip", nargs="+", required=True,
                   help="clip files, one repetition each, in order")
    p.add_argument("--profile", default=None,
                   help="tuned profile JSON for this subject")
    p.add_argument("--models-dir", default=None)
    p.add_argument("--v-f", type=int, default=VOTE_WINDOW_DEFAULT)
    p.add_argument("--out", default=None, help="write the session log here")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("tune", help="fit per-user thresholds from "
                                    "unaffected-side clips")
    p.add_argument("--subject", required=True)
    p.add_argument("--clips", nargs="+", default=None)
    p.add_argument("--corpus", default=None,
                   help="take the subject's unaffected clips from this corpus")
    p.add_argument("--profiles-dir", default="profiles")
    p.add_argument("--k", type=int, default=None,
                   help="force one sigma multiplier for every rule")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("corpus", help="generate the labeled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=synth.N_SUBJECTS_DEFAULT)
    p.add_argument("--reps", type=int, default=synth.REPS_PER_SIDE_DEFAULT)
    p.set_defaults(func=_cmd_corpus)

    p = sub.add_parser("train", help="train model bundles on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=_hidden_arg,
                   default=evaluation.DEFAULT_HIDDEN)
    p.add_argument("--lr", type=float, default=evaluation.DEFAULT_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--comp-stride", type=int,
                   default=evaluation.DEFAULT_COMP_STRIDE)
    p.set_defaults(func=_cmd_train)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "tune" and not args.clips and not args.corpus:
        parser.error("tune needs --clips or --corpus")
    try:
        return args.func(args)
    except (CoachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# coach-eval
# ---------------------------------------------------------------------------

def _cmd_loso(args: argparse.Namespace) -> int:
    corpus = synth.load_corpus(args.corpus)
    variants = tuple(args.variants.split(",")) if args.variants \
        else evaluation.VARIANTS
    report = evaluation.loso_cv(corpus, variants=variants,
                                hidden=args.hidden, lr=args.lr,
                                seed=args.seed,
                                comp_stride=args.comp_stride,
                                progress=lambda s: print(s, file=sys.stderr))
    report.save(args.out_dir)
    print(f"{'variant':<10} mean F1")
    for variant in variants:
        print(f"{variant:<10} {report.variant_mean(variant):.4f}")
    for comp in report.comparisons:
        print(f"{comp.variant_a} vs {comp.variant_b}: "
              f"delta {comp.delta:+.4f}, t {comp.t_stat:.2f}, "
              f"two-sided p {comp.p_two_sided:.2e}")
    problems = evaluation.audit_no_leakage(report)
    if problems:
        print(f"LEAKAGE AUDIT FAILED ({len(problems)} problems)",
              file=sys.stderr)
        for problem in problems[:20]:
            print(f"  {problem}", file=sys.stderr)
        return 1
    print("leakage audit clean")
    print(f"report written under {args.out_dir}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    corpus = synth.load_corpus(args.corpus)
    streams = evaluation.corpus_truth_streams(corpus)
    result = evaluation.voting_sweep(streams, windows=args.windows,
                                     flip_p=args.flip_p,
                                     n_seeds=args.seeds, seed=args.seed)
    for window in result.windows:
        print(f"V_f={window:>3}: mean F1 {result.mean_f1[window]:.4f}")
    print(f"largest vs single-frame window: t {result.t_stat:.1f}, "
          f"one-sided p {result.p_one_sided:.2e}")
    if args.out:
        result.write_csv(args.out)
        print(f"per-seed table written to {args.out}")
    return 0


def eval_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coach-eval",
        description="Evaluation harness: cross-validation and voting sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loso", help="leave-one-subject-out study")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", default="loso_out")
    p.add_argument("--variants", default=None,
                   help="comma-separated subset of: "
                        + ",".join(evaluation.VARIANTS))
    p.add_argument("--hidden", type=_hidden_arg,
                   default=evaluation.DEFAULT_HIDDEN)
    p.add_argument("--lr", type=float, default=evaluation.DEFAULT_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--comp-stride", type=int,
                   default=evaluation.DEFAULT_COMP_STRIDE)
    p.set_defaults(func=_cmd_loso)

    p = sub.add_parser("sweep", help="voting-window noise study")
    p.add_argument("--corpus", required=True)
    p.add_argument("--windows", type=_windows_arg, default=(1, 5, 9, 15, 21, 29))
    p.add_argument("--flip-p", type=float, default=0.2)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write per-seed CSV here")
    p.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CoachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(coach_main())
