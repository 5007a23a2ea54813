import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import transcripts, tx
from diarcorrect.metrics import cpwer, error_counts, metrics_report, sawer, wer
from diarcorrect.transcript import Transcript, Word
from oracles import oracle_cpwer, oracle_sawer, oracle_wer


def pairs(t):
    return [(w.text, w.speaker) for w in t.words]


REF = tx(("a", 1), ("b", 1), ("c", 2), ("d", 2))


def test_wer_example():
    assert wer(["hello", "world", "how", "are", "you"], ["hello", "word", "how", "you"]) == Fraction(2, 5)


def test_wer_empty_reference():
    with pytest.raises(ValueError, match="empty reference"):
        wer([], ["a"])


def test_cpwer_mislabel():
    hyp = REF.with_labels([1, 2, 2, 2])
    value, mapping = cpwer(REF, hyp)
    assert value == Fraction(1, 2)
    assert mapping == {1: 1, 2: 2}
    assert sawer(REF, hyp) == Fraction(1, 2)


def test_swapped_labels():
    hyp = REF.with_labels([2, 2, 1, 1])
    r = metrics_report(REF, hyp)
    assert (r.wer, r.cpwer, r.sawer, r.delta_cp, r.delta_sa) == (0, 0, 1, 0, 1)
    assert r.permutation == {2: 1, 1: 2}


def test_differing_speaker_counts_padded():
    hyp = REF.with_labels([1, 1, 1, 1])
    assert cpwer(REF, hyp)[0] == Fraction(1, 1)
    hyp = REF.with_labels([1, 2, 3, 3])
    assert cpwer(REF, hyp)[0] == oracle_cpwer(pairs(REF), pairs(hyp))


def test_speaker_cap():
    many = Transcript.from_pairs([(str(i), i) for i in range(1, 8)], id="m")
    with pytest.raises(ValueError, match="permutation search too large"):
        cpwer(many, many)


def test_negative_delta_cp_not_clamped():
    # speaker streams align perfectly while the interleaved order does not
    ref = tx(("a", 1), ("b", 2))
    hyp = tx(("b", 2), ("a", 1))
    r = metrics_report(ref, hyp)
    assert r.wer == 1
    assert r.cpwer == 0
    assert r.delta_cp == -1


def _random_instance(rng):
    vocab = ["a", "b", "c", "d", "e"]
    nr = rng.randint(1, 10)
    nh = rng.randint(0, 10)
    ks = rng.randint(1, 3)
    kh = rng.randint(1, 3)
    ref = tx(*[(rng.choice(vocab), rng.randint(1, ks)) for _ in range(nr)])
    hyp = tx(*[(rng.choice(vocab), rng.randint(1, kh)) for _ in range(nh)])
    return ref, hyp


def test_oracle_equivalence_1000():
    rng = random.Random(1234)
    for _ in range(1000):
        ref, hyp = _random_instance(rng)
        r = metrics_report(ref, hyp)
        assert r.wer == oracle_wer(ref.texts, hyp.texts)
        assert r.cpwer == oracle_cpwer(pairs(ref), pairs(hyp))
        assert r.sawer == oracle_sawer(pairs(ref), pairs(hyp))


@given(transcripts(min_size=1), transcripts())
def test_delta_cp_bounded_by_delta_sa(ref, hyp):
    r = metrics_report(ref, hyp)
    assert r.delta_cp <= r.delta_sa
    assert 0 <= r.cpwer <= r.sawer


@given(transcripts(min_size=1), transcripts(), st.permutations([1, 2, 3]))
def test_cpwer_relabel_invariant(ref, hyp, perm):
    relabeled = hyp.with_labels([perm[s - 1] for s in hyp.speakers])
    assert cpwer(ref, hyp)[0] == cpwer(ref, relabeled)[0]


@given(transcripts(min_size=1))
def test_identical_is_zero(t):
    r = metrics_report(t, t)
    assert (r.wer, r.cpwer, r.sawer, r.delta_cp, r.delta_sa) == (0, 0, 0, 0, 0)


@given(transcripts(min_size=1))
def test_oracle_labels_zero_delta(ref):
    hyp = Transcript("h", tuple(Word(w.text, w.speaker) for w in ref.words))
    r = metrics_report(ref, hyp)
    assert r.delta_cp == r.delta_sa == 0


def test_error_counts():
    c = error_counts(REF, REF.with_labels([1, 2, 2, 2]))
    assert (c.wer_errors, c.cp_errors, c.sa_errors, c.ref_words) == (0, 2, 2, 4)


def test_mean_mode():
    ref = tx(("a", 1), ("b", 1), ("c", 1), ("d", 2))
    hyp = ref.with_labels([1, 1, 1, 1])
    # stream 1 gains one insertion, stream 2 loses its only word
    assert cpwer(ref, hyp)[0] == Fraction(2, 4)
    assert cpwer(ref, hyp, mean=True)[0] == (Fraction(1, 3) + 1) / 2
    assert sawer(ref, hyp, mean=True) == (Fraction(1, 3) + 1) / 2


def test_mean_mode_charges_stray_hypothesis_speaker():
    ref = tx(("a", 1), ("b", 1))
    hyp = tx(("a", 1), ("b", 1), ("x", 2))
    assert cpwer(ref, hyp, mean=True)[0] == Fraction(1, 2)


def test_as_dict():
    d = metrics_report(REF, REF.with_labels([2, 2, 1, 1])).as_dict()
    assert d["sawer"] == 1.0
    assert d["exact"]["delta_sa"] == "1"
    assert d["permutation"] == {"1": 2, "2": 1}
