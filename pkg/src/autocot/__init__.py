"""Automatic chain-of-thought demonstration construction and evaluation.

Builds few-shot reasoning prompts from an unlabeled question corpus by
clustering questions for diversity, generating a zero-shot reasoning chain
per representative question, and gating candidates with simple selection
heuristics — plus the sampling baselines, evaluation metrics, and streaming
bootstrap needed to study the method offline.
"""

__version__ = "0.1.0"

from .cluster import ClusterModel, cosine_similarity, kmeans, top_k_similar
from .corpus import AnswerFormat, DatasetSpec, Question, load_dataset
from .cot import (
    Demonstration,
    ReasoningChain,
    extract_answer,
    generate_chain,
    render_demonstration,
    render_inference_prompt,
    render_zero_shot_cot_prompt,
)
from .demo import SelectionCriteria, SortMode, construct_demos, meets_criteria
from .embed import HashBowEmbedder, RemoteEmbedder, embed_corpus
from .evaluate import accuracy, cluster_error_rates, run_inference, unresolving_rate
from .llm import CachedBackend, DecodingParams, RemoteBackend, ScriptedBackend
from .stream import run_bootstrap

__all__ = [
    "AnswerFormat",
    "CachedBackend",
    "ClusterModel",
    "DatasetSpec",
    "DecodingParams",
    "Demonstration",
    "HashBowEmbedder",
    "Question",
    "ReasoningChain",
    "RemoteBackend",
    "RemoteEmbedder",
    "ScriptedBackend",
    "SelectionCriteria",
    "SortMode",
    "accuracy",
    "cluster_error_rates",
    "construct_demos",
    "cosine_similarity",
    "embed_corpus",
    "extract_answer",
    "generate_chain",
    "kmeans",
    "load_dataset",
    "meets_criteria",
    "render_demonstration",
    "render_inference_prompt",
    "render_zero_shot_cot_prompt",
    "run_bootstrap",
    "run_inference",
    "top_k_similar",
    "unresolving_rate",
]
