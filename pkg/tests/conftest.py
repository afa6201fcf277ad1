import pathlib

import pytest

from sliced import pipeline
from sliced.config import load_config

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> pathlib.Path:
    return CORPUS


@pytest.fixture(scope="session")
def corpus_config():
    return load_config(str(CORPUS / "config.json"))


def _build(model: str, config):
    graph = pipeline.load_model(str(CORPUS / f"{model}.json"))
    machine, report = pipeline.build_machine(graph, config=config)
    return graph, machine, report


@pytest.fixture(scope="session")
def mini(corpus_config):
    return _build("adapt-mini", corpus_config)


@pytest.fixture(scope="session")
def trip(corpus_config):
    return _build("adapt-trip", corpus_config)


@pytest.fixture(scope="session")
def bank6(corpus_config):
    return _build("adapt-bank6", corpus_config)


@pytest.fixture(scope="session")
def repair(corpus_config):
    return _build("adapt-repair", corpus_config)


@pytest.fixture(scope="session")
def sense(corpus_config):
    return _build("sense-mini", corpus_config)
