import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langdiar.corpus import (
    CORPUS_PRESETS,
    CorpusSpec,
    Duration,
    read_feature_file,
    synth_corpus,
    synth_utterance,
    write_corpus,
)
from langdiar.errors import ConfigError
from langdiar.io import read_rttm


def test_alternating_layout():
    u = synth_utterance(CorpusSpec(n_segments=4), 3)
    assert [s.label for s in u.reference] == ["L0", "L1", "L0", "L1"]
    assert len(u.change_times) == 3


def test_presets():
    t = CORPUS_PRESETS["ttsf"]
    assert t.durations[0].median == 3.0 and t.durations[1].median == 3.0
    m = CORPUS_PRESETS["mscs"]
    assert np.isclose(m.durations[0].mean, 1.5) and np.isclose(m.durations[1].mean, 0.5)
    assert np.isclose(m.expected_time_ratio(), 4.0)


def test_mscs_empirical_ratio():
    utts, man = synth_corpus(CORPUS_PRESETS["mscs"], 20)
    ratio = man["class_time"]["P"] / man["class_time"]["S"]
    assert 3.0 <= ratio <= 5.0


def test_reference_matches_frame_labels():
    u = synth_utterance(CORPUS_PRESETS["ttsf"].replace(silence=Duration(0.3)), 4)
    for s in u.reference:
        a, b = int(round(s.onset / 0.01)), int(round(s.end / 0.01))
        cls = int(s.label[1:])
        assert np.all(u.frame_labels[a:b] == cls)
    assert np.all(u.features.energies[u.frame_labels < 0] < 0.01)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9))
def test_invariants(seed, n_seg):
    spec = CorpusSpec(n_segments=n_seg, silence=Duration(0.2), seed=seed)
    u = synth_utterance(spec)
    segs = u.reference.segments
    assert all(a.end <= b.onset + 1e-9 for a, b in zip(segs, segs[1:]))
    assert len(u.features) == len(u.frame_labels)
    assert np.all(np.diff(u.features.frame_starts) > 0)


def test_class_means():
    spec = CorpusSpec(separation=6)
    m = spec.means()
    assert np.isclose(np.linalg.norm(m[0] - m[1]), 6)
    u = synth_utterance(spec, 1)
    x = u.features.features
    assert abs(x[u.frame_labels == 0, 0].mean() + 3) < 0.2


def test_determinism_and_files(tmp_path):
    spec = CORPUS_PRESETS["ttsf"].replace(seed=42)
    a, _ = synth_corpus(spec, 3)
    b, _ = synth_corpus(spec, 3)
    write_corpus(tmp_path / "a", spec, a)
    write_corpus(tmp_path / "b", spec, b)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert len(man["utterances"]) == 3
    seq = read_feature_file(tmp_path / "a" / "utt00000.feats")
    assert np.allclose(seq.features, a[0].features.features, atol=1e-5)
    ref = read_rttm(tmp_path / "a" / "utt00000.rttm")
    assert [s.label for s in ref] == [s.label for s in a[0].reference]


def test_spec_dict_round_trip():
    spec = CORPUS_PRESETS["mscs"]
    doc = json.loads(json.dumps(spec.to_dict()))
    assert CorpusSpec.from_dict(doc) == spec
    assert CorpusSpec.from_dict({"preset": "mscs", "seed": 3}).seed == 3
    with pytest.raises(ConfigError):
        CorpusSpec.from_dict({"sepration": 2})


def test_spec_guards():
    with pytest.raises(ConfigError):
        CorpusSpec(class_names=("a",))
    with pytest.raises(ConfigError):
        CorpusSpec(switch_model="random")
    with pytest.raises(ConfigError):
        synth_corpus(CorpusSpec(), 0)


def test_markov_switching():
    spec = CorpusSpec(n_classes=3, class_names=("a", "b", "c"), durations=(Duration(1.0),) * 3,
                      switch_model="markov", stay_prob=0.5, n_segments=12)
    u = synth_utterance(spec, 8)
    labels = [s.label for s in u.reference]
    assert all(x != y for x, y in zip(labels, labels[1:]))
