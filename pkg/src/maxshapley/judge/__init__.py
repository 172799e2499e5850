"""Utility oracles backed by chat models, offline mocks, caching and cost accounting."""

from maxshapley.judge.agent import Answer, PromptedAgent, generate_answer, judge_utility
from maxshapley.judge.backends import (
    ChatBackend,
    ChatRequest,
    Completion,
    HTTPChatBackend,
    RecordingBackend,
    ReplayBackend,
)
from maxshapley.judge.cache import CachedOracle, UtilityCache, UtilityCacheEntry, cached_utility
from maxshapley.judge.endpoints import EndpointConfig, estimate_cost
from maxshapley.judge.mock import MockChatBackend, PlantedChatBackend
from maxshapley.judge.parsing import parse_judge_score, parse_list, parse_relevance
from maxshapley.judge.prompts import PromptTemplates
from maxshapley.judge.utility import JudgeUtility

__all__ = [
    "Answer",
    "CachedOracle",
    "ChatBackend",
    "ChatRequest",
    "Completion",
    "EndpointConfig",
    "HTTPChatBackend",
    "JudgeUtility",
    "MockChatBackend",
    "PlantedChatBackend",
    "PromptTemplates",
    "PromptedAgent",
    "RecordingBackend",
    "ReplayBackend",
    "UtilityCache",
    "UtilityCacheEntry",
    "cached_utility",
    "estimate_cost",
    "generate_answer",
    "judge_utility",
    "parse_judge_score",
    "parse_list",
    "parse_relevance",
]
