import numpy as np
import pytest

from _factories import random_instances
from stagecue.evaluate import accuracy, multi_seed, per_category, predictions
from stagecue.instances import McInstance
from stagecue.reader import build_vocab, init_params


def overlap_instances(n, n_options=3, category=None):
    """Gold option tokens appear in the document, so a params-with-identity
    reader scores gold highest; flipping the document breaks that."""
    out = []
    for i in range(n):
        options = tuple(f"opt{i}_{k}" for k in range(n_options))
        gold = i % n_options
        out.append(McInstance(id=f"o{i}", document=f"the {options[gold]} here",
                              question="pick", options=options, gold=gold,
                              category=category))
    return out


def identity_params(data, dim_boost=1.0):
    vocab = build_vocab(data)
    params = init_params(vocab, dim=len(vocab) + 1, scale=0.0)
    params.embeddings = np.eye(len(vocab) + 1) * dim_boost
    params.bilinear = np.eye(len(vocab) + 1)
    return params


def test_accuracy_on_a_solved_dataset():
    data = overlap_instances(9)
    params = identity_params(data)
    report = accuracy(params, data)
    assert (report.n, report.correct, report.accuracy) == (9, 9, 1.0)
    assert predictions(params, data).tolist() == [i.gold for i in data]


def test_accuracy_counts_mistakes():
    data = overlap_instances(6)
    sabotaged = [
        McInstance(id=i.id, document="nothing useful", question=i.question,
                   options=i.options, gold=i.gold)
        for i in data
    ]
    params = identity_params(data)
    report = accuracy(params, sabotaged)
    # all scores tie at zero, argmax picks index 0, so only gold==0 score
    assert report.correct == sum(1 for i in sabotaged if i.gold == 0)
    assert report.accuracy == report.correct / report.n


def test_accuracy_rejects_empty():
    params = init_params({"a": 1}, dim=2)
    with pytest.raises(ValueError, match="empty"):
        accuracy(params, [])


def test_per_category_buckets():
    tagged = overlap_instances(4, category="x") + [
        McInstance(id="u0", document="the z here", question="pick",
                   options=("z", "y"), gold=0, category=None)
    ]
    params = identity_params(tagged)
    report = per_category(params, tagged)
    assert set(report.per_category) == {"x", "uncategorized"}
    assert report.per_category["x"]["n"] == 4
    assert report.per_category["uncategorized"]["n"] == 1
    total = sum(v["n"] for v in report.per_category.values())
    assert total == report.n
    assert sum(v["correct"] for v in report.per_category.values()) == report.correct
    d = report.as_dict()
    assert set(d) == {"n", "correct", "accuracy", "per_category"}


def test_multi_seed_aggregates():
    result = multi_seed(lambda seed: float(seed), [1, 2, 3, 4])
    assert result.per_seed == [1.0, 2.0, 3.0, 4.0]
    assert result.mean == 2.5
    assert result.std == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
    single = multi_seed(lambda seed: 0.5, [7])
    assert single.std == 0.0
    with pytest.raises(ValueError, match="seed"):
        multi_seed(lambda seed: 0.0, [])
