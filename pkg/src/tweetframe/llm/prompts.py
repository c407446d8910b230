"""Prompt templates for LLM classification.

The templates are reproduced character for character, including the
trailing space after "resolution" in three of them; only the
``[tweet text]`` slot is substituted.
"""

from __future__ import annotations

from dataclasses import dataclass

from tweetframe.corpus import Tweet

SLOT = "[tweet text]"

_DIRECT_HEADER = (
    "Based on Kingdon's theory, please classify this tweet into one of these categories:\n"
    "1. Problem Oriented - The tweet describes or mentions a problem, issue, or challenge\n"
)
_POLITICAL = "3. Political - The tweet is political in nature but doesn't clearly focus on problems or solutions\n"
_CONFIDENCE_HEADER = (
    "Based on Kingdon's theory, please provide confidence scores for this tweet.\n"
    "Classify this tweet into these categories:\n"
    "1. Problem Oriented - The tweet describes or mentions a problem, issue, or challenge\n"
    "2. Solution Oriented - The tweet describes or mentions a solution, fix, or resolution \n"
    "For this tweet, please provide:\n"
    "- Confidence score for Class 1 (Problem) as a percentage (0-100)\n"
    "- Confidence score for Class 2 (Solution) as a percentage (0-100)\n"
    "Note: The sum of both confidence scores should not exceed 100\n"
)

TEMPLATES = {
    ("direct", True): (
        _DIRECT_HEADER
        + "2. Solution Oriented - The tweet describes or mentions a solution, fix, or resolution\n"
        + _POLITICAL
        + "Respond with ONLY the number (1, 2, or 3) corresponding to the category, followed by a brief explanation.\n"
        "Format your response as: NUMBER [explanation]\n"
        "For example: 1 [This tweet focuses on describing a problem with healthcare costs]\n"
        "Tweet: " + SLOT
    ),
    ("direct", False): (
        _DIRECT_HEADER
        + "2. Solution Oriented - The tweet describes or mentions a solution, fix, or resolution \n"
        + _POLITICAL
        + "Respond with ONLY the number (1, 2, or 3) corresponding to the category.\n"
        "Tweet: " + SLOT
    ),
    ("confidence", True): (
        _CONFIDENCE_HEADER
        + "Format your response as: CONF1,CONF2 [explanation]\n"
        "For example: 85,10 Political discussion with some problem elements\n"
        "Tweet: " + SLOT
    ),
    ("confidence", False): (
        _CONFIDENCE_HEADER
        + "Format your response as: CONF1,CONF2\n"
        "For example: 85,10\n"
        "Tweet: " + SLOT
    ),
}


@dataclass(frozen=True)
class PromptSpec:
    mode: str = "direct"  # "direct" or "confidence"
    with_explanation: bool = False

    def __post_init__(self):
        if self.mode not in ("direct", "confidence"):
            raise ValueError(f"prompt mode must be direct or confidence, got {self.mode!r}")

    @property
    def template(self) -> str:
        return TEMPLATES[(self.mode, self.with_explanation)]

    @property
    def key(self) -> str:
        return f"{self.mode}{'+explanation' if self.with_explanation else ''}"


def build_prompt(spec: PromptSpec, tweet: Tweet | str) -> str:
    text = tweet.text if isinstance(tweet, Tweet) else str(tweet)
    if not text.strip():
        raise ValueError("tweet text is empty")
    return spec.template.replace(SLOT, text)
