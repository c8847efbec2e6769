import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlap2seq.metrics import aggregate_runs, cohens_d, compare_runs, evaluate_split, f1_score

SPECIAL = {"<SOS>", "<UNK>", "<EOS>"}


def brute_f1(pred, truth):
    """Reference scorer written from the formulas with plain loops."""
    sp, st_ = [], []
    for w in pred:
        if w not in SPECIAL and w not in sp:
            sp.append(w)
    for w in truth:
        if w not in st_:
            st_.append(w)
    tp = sum(1 for w in sp if w in st_)
    fp = sum(1 for w in sp if w not in st_)
    fn = sum(1 for w in st_ if w not in sp)
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    return (2 * p * r / (p + r) if p + r > 0 else 0.0), tp, fp, fn


WORDS = ["get", "set", "mean", "max", "file", "read", "<UNK>", "<EOS>", "<SOS>"]


def random_pair(rng):
    pred = list(rng.choice(WORDS, size=int(rng.integers(0, 7))))
    truth = list(rng.choice(WORDS[:6], size=int(rng.integers(1, 5))))
    return pred, truth


def test_examples():
    assert f1_score(["get", "mean"], ["get", "mean"]).f1 == 1.0
    r = f1_score(["get", "max"], ["get", "mean"])
    assert (r.tp, r.fp, r.fn, r.f1) == (1, 1, 1, 0.5)
    assert f1_score(["get", "get"], ["get"]).f1 == 1.0
    assert f1_score([], ["get"]).f1 == 0.0
    assert f1_score(["<UNK>"], ["get"]).precision == 0.0


def test_matches_brute_force_on_1000_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pred, truth = random_pair(rng)
        r = f1_score(pred, truth)
        f1, tp, fp, fn = brute_f1(pred, truth)
        assert (r.f1, r.tp, r.fp, r.fn) == (f1, tp, fp, fn)


words = st.lists(st.sampled_from(WORDS[:6]), max_size=6)


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_precision_recall_symmetry_and_bounds(a, b):
    ab, ba = f1_score(a, b), f1_score(b, a)
    assert ab.precision == ba.recall
    assert 0.0 <= ab.f1 <= 1.0
    assert ab.tp <= len(set(a)) and ab.tp <= len(set(b))
    if a and b:
        assert (ab.f1 == 1.0) == (set(a) == set(b))


def test_aggregate_examples():
    r = aggregate_runs([0.5, 0.5, 0.5])
    assert (r.mean, r.std, r.n) == (0.5, 0.0, 3)
    r = aggregate_runs([0.16, 0.18])
    assert r.mean == pytest.approx(0.17)
    assert r.std == pytest.approx(math.sqrt(2) * 0.01, rel=1e-9)
    assert aggregate_runs([0.3]).std is None
    with pytest.raises(ValueError):
        aggregate_runs([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_aggregate_mean_within_range(xs):
    r = aggregate_runs(xs)
    assert min(xs) - 1e-12 <= r.mean <= max(xs) + 1e-12


def test_cohens_d_examples():
    assert cohens_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    a = [0.0, 2.0]  # var 2
    b = [-math.sqrt(2) + x for x in a]  # shifted by one pooled std
    assert cohens_d(a, b) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=8),
    st.lists(st.floats(-5, 5), min_size=2, max_size=8),
    st.floats(-3, 3),
)
def test_cohens_d_shift_invariant_and_antisymmetric(a, b, c):
    if np.var(a) + np.var(b) < 1e-6:
        return
    d = cohens_d(a, b)
    assert cohens_d([x + c for x in a], [x + c for x in b]) == pytest.approx(d, rel=1e-6, abs=1e-9)
    assert cohens_d(b, a) == pytest.approx(-d, rel=1e-12, abs=1e-12)


def test_compare_runs_degenerate_and_welch():
    same = compare_runs([0.2, 0.2], [0.2, 0.2])
    assert (same.p_value, same.cohens_d) == (1.0, 0.0)
    assert same.test.startswith("Welch")
    with pytest.raises(ValueError):
        compare_runs([0.1], [0.2, 0.3])
    # independent Welch computation
    a, b = np.array([0.17, 0.18, 0.19, 0.175]), np.array([0.15, 0.16, 0.155])
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    from scipy.stats import t as tdist

    assert compare_runs(a, b).p_value == pytest.approx(2 * tdist.sf(abs(t), dof), rel=1e-10)


def test_p_value_decreases_with_separation():
    rng = np.random.default_rng(0)
    base = rng.normal(0, 1, size=10)
    other = rng.normal(0, 1, size=10)
    ps = [compare_runs(base, other + shift).p_value for shift in (0.5, 1.0, 2.0, 4.0)]
    assert all(x > y for x, y in zip(ps, ps[1:]))


class FakeModel:
    def __init__(self, outputs):
        self.outputs = outputs

    def predict(self, graphs, batch_size=256):
        return [self.outputs[g.provenance] for g in graphs]


class G:
    def __init__(self, prov, target):
        self.provenance, self.target = prov, target


def test_evaluate_split_mean_and_score_file(tmp_path):
    from mlap2seq.vocab import Vocabulary

    v = Vocabulary(["get", "mean", "max"])
    graphs = [G("a", ["get", "mean"]), G("b", ["get", "max"])]
    model = FakeModel({"a": [3, 4], "b": [3, 2]})
    f = evaluate_split(model, graphs, v, score_file=tmp_path / "s.tsv")
    assert f == pytest.approx((1.0 + 2 / 3) / 2)
    assert evaluate_split(model, graphs * 2, v) == pytest.approx(f)
    lines = (tmp_path / "s.tsv").read_text().splitlines()
    assert lines[0] == "a\tget mean\t1.000000"
    assert evaluate_split(FakeModel({"a": [3, 4]}), graphs[:1], v) == 1.0


def test_evaluate_split_matches_brute_force_on_100_examples():
    from mlap2seq.vocab import Vocabulary

    rng = np.random.default_rng(1)
    v = Vocabulary(WORDS[:6])
    graphs, outputs, expected = [], {}, []
    for i in range(100):
        pred, truth = random_pair(rng)
        ids = [v.encode(w) for w in pred if w not in SPECIAL]
        graphs.append(G(str(i), truth))
        outputs[str(i)] = ids
        expected.append(brute_f1(v.decode_all(ids), truth)[0])
    assert evaluate_split(FakeModel(outputs), graphs, v) == float(np.mean(expected))
