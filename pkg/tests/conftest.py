"""Shared fixtures: a small synthetic corpus and ad-hoc instance factories."""

import pytest

from _factories import random_instances
from stagecue.synth import FixtureSpec, extract_corpus, synthesize_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return synthesize_corpus(FixtureSpec(n_scripts=6, scenes_per_script=4,
                                         turns_per_scene=5, seed=3))


@pytest.fixture(scope="session")
def small_triples(small_corpus):
    return extract_corpus(small_corpus)


@pytest.fixture
def instance_factory():
    return random_instances
