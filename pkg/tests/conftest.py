"""Shared fixtures.

The full synthetic corpus, its extracted features, the trained model
bundles and the cross-validation report are expensive, so they are
built once per test session and shared.  Everything is seeded; the
fixtures are deterministic across runs.
"""

import numpy as np
import pytest

from rehabcoach import evaluation, synth
from rehabcoach.skeleton import Exercise, Side


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return synth.generate_corpus(root, seed=0)


@pytest.fixture(scope="session")
def corpus_features(corpus):
    return evaluation.extract_corpus_features(corpus)


@pytest.fixture(scope="session")
def trained_models(corpus, corpus_features):
    return evaluation.train_all_models(corpus, feats=corpus_features, seed=0)


@pytest.fixture(scope="session")
def loso_report(corpus, corpus_features):
    return evaluation.loso_cv(corpus, feats=corpus_features, seed=0)


# -- small, fast clip fixtures ----------------------------------------------

@pytest.fixture(scope="session")
def subject():
    # index 3: no baseline shift, no anthropometric quirks
    return synth.make_subject(3, seed=0)


@pytest.fixture(scope="session")
def arm(subject):
    return subject.arm_for(Side.AFFECTED)


@pytest.fixture(scope="session")
def clean_clip(subject):
    return synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                               seed=11, rep=0)


@pytest.fixture(scope="session")
def comp_clip(subject):
    """E1 clip with one injected head-z posture defect, frames [40, 81)."""
    defects = synth.DefectSpec(segments=(
        synth.CompSegment("head", "z", 0.45, 40, 81),))
    return synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                               defects=defects, seed=12, rep=1)


@pytest.fixture(scope="session")
def comp2_clip(subject):
    """E1 clip with head displaced on two axes over frames [40, 81).

    A single violated axis cannot flip the per-joint rule majority (one
    fail against two passes), so fixtures that must trip the rule model's
    compensation verdict seed two axes of the same joint.
    """
    defects = synth.DefectSpec(segments=(
        synth.CompSegment("head", "z", 0.45, 40, 81),
        synth.CompSegment("head", "y", 0.45, 40, 81)))
    return synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                               defects=defects, seed=12, rep=1)


@pytest.fixture(scope="session")
def tremor_clip(subject):
    defects = synth.DefectSpec(tremor_amp=(0.013, 0.0, 0.013),
                               tremor_freq=4.2)
    return synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                               defects=defects, seed=13, rep=2)


@pytest.fixture(scope="session")
def rom_clip(subject):
    defects = synth.DefectSpec(rom_deficit=0.4)
    return synth.generate_clip(subject, Exercise.E1, Side.AFFECTED,
                               defects=defects, seed=14, rep=3)


@pytest.fixture(scope="session")
def unaffected_clips(subject):
    """Six defect-free unaffected-side clips of the small subject."""
    clips = []
    for exercise in Exercise:
        for rep in range(2):
            clips.append(synth.generate_clip(
                subject, exercise, Side.UNAFFECTED, seed=20 + rep, rep=rep))
    return clips


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
