"""Completion-model gateway: prompt templates, strict wire-format parsing, transport."""
from .parsing import (
    EmptyField,
    InconsistentCounts,
    InvalidType,
    JudgeVerdict,
    MalformedReply,
    MissingKey,
    NegativeCount,
    ReplyError,
    parse_extraction_response,
    parse_judge_response,
    parse_recommendation_response,
    render_extraction_reply,
    render_judge_reply,
    render_recommendation_reply,
)
from .prompts import (
    EXTRACTION_TEMPLATE,
    JUDGE_TEMPLATE,
    RECOMMENDATION_TEMPLATE,
    PromptRole,
    PromptText,
    build_extraction_prompt,
    build_judge_prompt,
    build_recommendation_prompt,
    estimate_tokens,
    render_qa_list,
    render_transcript_lines,
)
from .providers import (
    BudgetExceeded,
    ProviderConfig,
    complete,
    credential_env_name,
    mock_reply,
)

__all__ = [
    "BudgetExceeded",
    "EXTRACTION_TEMPLATE",
    "EmptyField",
    "InconsistentCounts",
    "InvalidType",
    "JUDGE_TEMPLATE",
    "JudgeVerdict",
    "MalformedReply",
    "MissingKey",
    "NegativeCount",
    "PromptRole",
    "PromptText",
    "ProviderConfig",
    "RECOMMENDATION_TEMPLATE",
    "ReplyError",
    "build_extraction_prompt",
    "build_judge_prompt",
    "build_recommendation_prompt",
    "complete",
    "credential_env_name",
    "estimate_tokens",
    "mock_reply",
    "parse_extraction_response",
    "parse_judge_response",
    "parse_recommendation_response",
    "render_extraction_reply",
    "render_judge_reply",
    "render_qa_list",
    "render_recommendation_reply",
    "render_transcript_lines",
]
