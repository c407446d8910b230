"""Prompt-based classification through a remote chat-completion endpoint."""

from tweetframe.llm.client import (
    AuthError,
    ChatCompletionsTransport,
    LlmEndpoint,
    LlmResponse,
    ResponseCache,
    TransportError,
    classify_remote,
    write_responses,
    write_unclassified,
)
from tweetframe.llm.parsing import (
    K_GRID,
    ConfidenceParse,
    DirectParse,
    GridSearchResult,
    ParseFailure,
    decide_k_threshold,
    grid_search_k,
    parse_confidence,
    parse_direct,
)
from tweetframe.llm.prompts import SLOT, TEMPLATES, PromptSpec, build_prompt

__all__ = [
    "AuthError", "ChatCompletionsTransport", "LlmEndpoint", "LlmResponse", "ResponseCache",
    "TransportError", "classify_remote", "write_responses", "write_unclassified",
    "K_GRID", "ConfidenceParse", "DirectParse", "GridSearchResult", "ParseFailure",
    "decide_k_threshold", "grid_search_k", "parse_confidence", "parse_direct",
    "SLOT", "TEMPLATES", "PromptSpec", "build_prompt",
]
