"""Multi-hop knowledge-graph question answering over mined logical chains."""
from pathlib import Path

from .chains import CandidateSet, LogicalChain, Projection, build_projection, execute_chain, mine_chains
from .kg import KnowledgeGraph, load_kg, serialize_triplet
from .pipeline import Engine, EngineConfig, Response
from .plan import DecompositionPlan, decompose, parse_plan, resolve_seeds
from .templates import HashingEmbedder, TemplateRegistry, match_templates

DATA_DIR = Path(__file__).parent / "data"
MOVIES_DIR = DATA_DIR / "movies"

__all__ = [
    "CandidateSet",
    "DATA_DIR",
    "DecompositionPlan",
    "Engine",
    "EngineConfig",
    "HashingEmbedder",
    "KnowledgeGraph",
    "LogicalChain",
    "MOVIES_DIR",
    "Projection",
    "Response",
    "TemplateRegistry",
    "build_projection",
    "decompose",
    "execute_chain",
    "load_kg",
    "match_templates",
    "mine_chains",
    "parse_plan",
    "resolve_seeds",
    "serialize_triplet",
]
