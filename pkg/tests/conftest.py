from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chainqa import MOVIES_DIR  # noqa: E402
from chainqa.backends import ChainOracleReasoner, GoldPlanBackend, TemplateSummarizer  # noqa: E402
from chainqa.chains import Projection  # noqa: E402
from chainqa.kg import load_kg  # noqa: E402
from chainqa.pipeline import Engine, EngineConfig  # noqa: E402
from chainqa.templates import TemplateRegistry, load_templates  # noqa: E402


@pytest.fixture(scope="session")
def movies() -> Path:
    return MOVIES_DIR


@pytest.fixture(scope="session")
def movie_graph(movies):
    return load_kg(movies / "kb.txt")


@pytest.fixture(scope="session")
def movie_registry(movies):
    return TemplateRegistry(load_templates(movies / "templates.tsv"))


@pytest.fixture(scope="session")
def movie_projection(movies):
    return Projection.load(movies / "projection.tsv")


def make_oracle_engine(movies, graph, registry, projection, **config) -> Engine:
    return Engine(
        graph,
        registry,
        projection,
        GoldPlanBackend.load(movies / "gold_plans.json"),
        ChainOracleReasoner.load(movies / "gold_chains.json"),
        TemplateSummarizer(),
        EngineConfig(**config),
    )


@pytest.fixture
def oracle_engine(movies, movie_graph, movie_registry, movie_projection):
    return make_oracle_engine(movies, movie_graph, movie_registry, movie_projection)
