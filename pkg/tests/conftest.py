import pathlib

import pytest

import lgtree as lg

TREES = pathlib.Path(__file__).resolve().parent.parent / "trees"


@pytest.fixture(scope="session")
def star():
    return lg.load_tree(TREES / "star.tree")


@pytest.fixture(scope="session")
def dumbbell():
    return lg.load_tree(TREES / "dumbbell.tree")


@pytest.fixture(scope="session")
def two_layer():
    return lg.load_tree(TREES / "two_layer.tree")


@pytest.fixture(scope="session")
def lowcorr():
    return lg.load_tree(TREES / "lowcorr.tree")


@pytest.fixture(scope="session")
def tree_dir():
    return TREES
