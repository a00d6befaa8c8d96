"""Prompt templates and builders for the three completion-model tasks.

The template texts are fixed; builders substitute the bracketed slot with a
rendered transcript or QA list and enforce the input token budget. Token
counts are approximated as ceil(characters / 4) so budgeting stays
provider-agnostic and deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

from ..domain import Transcript

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from ..clustering import Cluster

DEFAULT_MAX_INPUT_TOKENS = 4000

TRANSCRIPT_SLOT = "[Call Conversation Transcript]"
QA_LIST_SLOT = "[List of QA Pairs]"

EXTRACTION_TEMPLATE = """You are given a call transcript that has two speakers: "Customer" (the person seeking help) and "Agent" (the customer service representative).

Your goal is to extract factually correct high-quality knowledge from this call in the form of "questions" and "answers" that will be uploaded to a knowledge base such that if similar questions are asked by a customer in a future conversation, the knowledge base can be used to address the customer concern.

Since the transcript may contain stilted or colloquial phrasing due to being transcribed from spoken audio, you can rewrite the knowledge (i.e., QA pair) extracted from the conversation such that the extracted knowledge is human-readable.

For knowledge extraction, you should follow these rules:

1. Only extract the knowledge that is non-sensitive and does not contain personally identifiable information (PII).
2. The extracted knowledge should be general, information-seeking in nature and applicable to future customers with similar needs. Chit-chats or rapport-building type questions that are not information-seeking should be avoided.
3. Do not extract those answers that are time sensitive. For instance, if an answer is only applicable till a certain date, ignore such types of knowledge extraction.
4. If the question is related to any product, then the product name must be mentioned in the selected QA pairs such that they are understandable when added to the knowledge base.

Output Format:

Only return a JSON array of objects without any additional text, where each object has three keys: (i) "Question", (ii) "Answer", and (iii) Justification.

In the above, "Justification" refers to the rationale behind why the specific "Question" and "Answer" pairs are selected and how they strictly follow all the rules. In addition, "Justification" may also contain some snippets from the conversation transcript that support the extracted knowledge (i.e., the Question-Answer pairs). If no knowledge pair is extracted, just return an empty JSON array.

Transcript:

[Call Conversation Transcript]"""

RECOMMENDATION_TEMPLATE = """You are given a cluster of question-answer (QA) pairs. The cluster is constructed in a way such that similar questions are grouped together in the same cluster. These QA pairs are extracted from different customer-agent conversations and will be stored in a company knowledge base.

In this task, your goal is to filter the QA pairs in the cluster by constructing representative QA pairs. For this purpose, you should follow the following rules:

1. No Duplicates: If there are multiple duplicate QA pairs in the cluster, only extract the QA pair that can be the representative for this cluster.
2. Rewrite or Extract: The representative QA pairs can either be extracted directly from the cluster, or you can rewrite them if that makes them better understandable.
3. Not time-sensitive: QA pairs that are only applicable for a certain time period (e.g., if something is due today) cannot be representative.
4. Non-personalized: QA pairs that are specific to certain customers or contain PII information, like account-specific details (e.g., billing info, addresses) cannot be representative.
5. Universal: QA pairs that are not general and cannot be applicable to future customers with similar needs cannot be representative.
6. Usefulness: QA pairs that agents cannot use in the company knowledge base to address questions asked by other customers in the future cannot be representative.
7. Information-Seeking: You should only select the information-seeking QA pairs. Personal questions (e.g., what is your name, address, etc.), chit-chat, or rapport-building type QA pairs should not be included.
8. Understandable: If the question in the QA pair is related to any product, then the product name must be clearly specified in the representative QA pairs so that it is understandable.

After strictly following the above rules, generate your answer in an array of JSON format, with the following keys:
(i) Representative Question
(ii) Representative Answer
(ii) Type
(iv) Explanation

Here, the value for type should be either "Rewritten" or "Extracted", where "Rewritten" means you rewrite it, while "Extracted" means it has been extracted without any rewrite. Moreover, Explanation will contain the reasoning behind "rewriting", and it should be "N/A" if "Extracted".

Note that you should only rewrite in case of urgency. For rewriting, you can mix information from multiple questions and answers to create the representative QA pair (if relevant) but ensure that your representative QA pairs do not lose any important information.

If similar questions have different answers, you can keep both of them if merging multiple answers into one representative is not possible.

The question cluster is given below. Please construct the representative QA pairs.

Question Cluster: [List of QA Pairs]"""

JUDGE_TEMPLATE = """You are given the knowledge extracted from a customer-agent conversation in the form of question-answer (QA) pairs that would be stored in the company's knowledge base. This is done so that in a future conversation between a new customer and a new agent in the company, the agent can use the knowledge base to answer the customer's question if similar questions or concerns are asked by the customer.

Your goal is to identify how many of the extracted QA pairs strictly follow the following rules:

1. Not Time-Sensitive: QA pairs that are only applicable for a certain time period (e.g., if something is due today) must not be there.
2. Non-personalized and No PII: QA pairs that are specific to certain customers and contain personally identifiable information (PII) or account-specific details (e.g., billing info, addresses) must not be there.
3. Universal: QA pairs that are not general and not applicable to future customers with similar needs, such that agents cannot use the QA pairs in the company knowledge base to address questions asked by any new customers, must not be there.
4. Information-Seeking: Personal questions (e.g., what is your name, address, etc.), chit-chat, or rapport-building type QA pairs must not be there.
5. Customer-Focused: The selected questions must be something that are asked by the customer, not the agent.
6. Understandable: If the question is related to any product, then the product name must be mentioned in the selected QA pairs such that they are understandable when added to the knowledge base.
7. Factually Correct: In comparison to the conversation context, the QA pair should be factually correct.

Now, your goal is to identify the QA pairs that fulfill the above criteria. For this, you are provided with the Conversation Transcript and the list of QA pairs that are extracted from it. Please generate your answer in the JSON format, with the following keys:

(i) Total Correct
(ii) Total Predicted
(iii) Justification

Here, Total Correct denotes the number of correct QA pairs, Total Predicted denotes the total number of QA pairs provided, while Justification denotes your reasoning behind your answer.

Transcript: [Call Conversation Transcript]

Extracted Questions: [List of QA Pairs]"""


class PromptRole(str, Enum):
    EXTRACTION = "Extraction"
    RECOMMENDATION = "Recommendation"
    JUDGE_EXTRACTION = "JudgeExtraction"
    JUDGE_RECOMMENDATION = "JudgeRecommendation"


@dataclass(frozen=True)
class PromptText:
    text: str
    role: PromptRole
    truncated: bool = False

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("prompt text must be non-empty")


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def render_transcript_lines(t: Transcript) -> list[str]:
    return [f"{turn.speaker.value}: {turn.text}" for turn in t.turns]


def render_qa_list(items: Sequence) -> list[str]:
    """Number QA-bearing records (anything with question/answer fields)."""
    lines: list[str] = []
    for i, item in enumerate(items, start=1):
        lines.append(f"{i}. Question: {item.question}")
        lines.append(f"   Answer: {item.answer}")
    return lines


def build_extraction_prompt(
    t: Transcript, max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS
) -> PromptText:
    """Fill the extraction template with "Speaker: text" lines.

    If the assembled prompt exceeds the input budget, the earliest turns are
    dropped (late turns carry the resolution) until it fits or a single turn
    remains; the result carries a truncated flag either way.
    """
    lines = render_transcript_lines(t)
    start = 0
    text = EXTRACTION_TEMPLATE.replace(TRANSCRIPT_SLOT, "\n".join(lines))
    while estimate_tokens(text) > max_input_tokens and start < len(lines) - 1:
        start += 1
        text = EXTRACTION_TEMPLATE.replace(TRANSCRIPT_SLOT, "\n".join(lines[start:]))
    return PromptText(text=text, role=PromptRole.EXTRACTION, truncated=start > 0)


def _fit_qa_prefix(
    template: str, slot: str, items: Sequence, max_input_tokens: int
) -> tuple[str, bool]:
    """Substitute the longest prefix of the numbered QA list that fits the budget."""
    count = len(items)
    text = template.replace(slot, "\n".join(render_qa_list(items)))
    while estimate_tokens(text) > max_input_tokens and count > 1:
        count -= 1
        text = template.replace(slot, "\n".join(render_qa_list(items[:count])))
    return text, count < len(items)


def build_recommendation_prompt(
    c: "Cluster", max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS
) -> PromptText:
    """Fill the recommendation template with the cluster's numbered QA pairs."""
    if not c.members:
        raise ValueError(f"cluster {c.cluster_id} has no members")
    pairs = [m.pair for m in c.members]
    text, truncated = _fit_qa_prefix(
        RECOMMENDATION_TEMPLATE, QA_LIST_SLOT, pairs, max_input_tokens
    )
    return PromptText(text=text, role=PromptRole.RECOMMENDATION, truncated=truncated)


def build_judge_prompt(
    subject: "Transcript | Cluster",
    pairs: Sequence,
    max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS,
) -> PromptText:
    """Fill the judge template with the subject and the pairs under evaluation.

    The subject slot takes the transcript's speaker lines, or for a cluster the
    numbered QA list of its members. If over budget, the subject rendering is
    cut first (earliest-first), then the pair list prefix.
    """
    if not pairs:
        raise ValueError("judge prompt needs at least one pair to evaluate")
    if isinstance(subject, Transcript):
        subject_lines = render_transcript_lines(subject)
        role = PromptRole.JUDGE_EXTRACTION
    else:
        subject_lines = render_qa_list([m.pair for m in subject.members])
        role = PromptRole.JUDGE_RECOMMENDATION

    def assemble(s_lines: list[str], qa_lines: list[str]) -> str:
        return JUDGE_TEMPLATE.replace(TRANSCRIPT_SLOT, "\n".join(s_lines)).replace(
            QA_LIST_SLOT, "\n".join(qa_lines)
        )

    qa_lines = render_qa_list(pairs)
    start = 0
    text = assemble(subject_lines, qa_lines)
    while estimate_tokens(text) > max_input_tokens and start < len(subject_lines) - 1:
        start += 1
        text = assemble(subject_lines[start:], qa_lines)
    count = len(pairs)
    while estimate_tokens(text) > max_input_tokens and count > 1:
        count -= 1
        text = assemble(subject_lines[start:], render_qa_list(pairs[:count]))
    return PromptText(text=text, role=role, truncated=start > 0 or count < len(pairs))
