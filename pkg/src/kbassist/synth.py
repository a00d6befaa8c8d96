"""Synthetic call-transcript corpus generator with a known plant plan.

Each generated transcript is a scripted support call: greeting, filler chat,
a handful of planted FAQ questions answered verbatim from a fixed topic bank,
optionally one "noise" question that belongs to no topic, and enough padding
to hit a realistic word count.  The generator returns both the corpus and a
:class:`PlantPlan` describing exactly what was planted where, so downstream
stages can be checked against ground truth instead of eyeballed.

Topic paraphrases differ only in one short slot word, which keeps every pair
of variants within ``INTRA_TOPIC_DISTANCE_BOUND`` of each other under the
hashed-trigram embedder while distinct topics stay far apart.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Mapping, Sequence

from .domain import QAPair, Corpus, Speaker, Transcript, Turn
from .gateway import JudgeVerdict

__all__ = [
    "INTRA_TOPIC_DISTANCE_BOUND",
    "InvalidParams",
    "PlantedQuestion",
    "TranscriptPlan",
    "PlantPlan",
    "TopicSpec",
    "TOPIC_BANK",
    "generate_synthetic_corpus",
    "expected_pairs",
    "plan_verdicts",
    "write_plan_file",
]

# Empirical ceiling on the cosine distance between any two paraphrases of the
# same topic under the default hashed-trigram embedder (measured max 0.125,
# with margin).  Kept below the default clustering eps of 0.3 so paraphrases
# always co-cluster, and below 0.15 so paraphrase similarity clears the 0.85
# novelty threshold.
INTRA_TOPIC_DISTANCE_BOUND = 0.14


class InvalidParams(ValueError):
    """Raised when generator parameters are out of range."""


@dataclass(frozen=True)
class TopicSpec:
    """One FAQ topic: a slotted question template plus its canonical answer."""

    topic_id: str
    prefix: str
    slots: tuple[str, ...]
    suffix: str
    answer: str

    def question(self, variant: int) -> str:
        return f"{self.prefix} {self.slots[variant]} {self.suffix}"

    @property
    def n_variants(self) -> int:
        return len(self.slots)


TOPIC_BANK: tuple[TopicSpec, ...] = (
    TopicSpec(
        "returns-window",
        "How long do I have to return an item after it", ("is", "was", "got", "gets"), "delivered?",
        "You have 30 days from the delivery date to return any item in its original packaging for a full refund.",
    ),
    TopicSpec(
        "password-reset",
        "How do I reset the password", ("for", "on", "of", "to"), "my online account?",
        "Open the sign-in page, choose Forgot Password, and follow the link we email you; the link stays valid for one hour.",
    ),
    TopicSpec(
        "shipping-time",
        "How many days does standard shipping", ("usually", "normally", "typically", "generally"), "take to arrive?",
        "Standard shipping takes five to seven business days within the continental United States.",
    ),
    TopicSpec(
        "warranty-length",
        "What is the warranty period", ("on", "for", "of", "with"), "the Aurora X2 vacuum cleaner?",
        "The Aurora X2 vacuum cleaner carries a two year manufacturer warranty covering parts and labor.",
    ),
    TopicSpec(
        "cancel-subscription",
        "How do I cancel", ("my", "the", "our", "a"), "monthly streaming subscription plan?",
        "Go to Account Settings, open the Billing tab, and select Cancel Plan; service continues until the end of the paid period.",
    ),
    TopicSpec(
        "refund-timeline",
        "How soon will my refund appear", ("on", "in", "at", "under"), "my credit card statement?",
        "Refunds are issued within two business days of receiving the return and take three to five days to appear on your statement.",
    ),
    TopicSpec(
        "store-hours",
        "What are the opening hours", ("of", "for", "at", "in"), "the downtown retail store?",
        "The downtown retail store is open nine to eight on weekdays and ten to six on weekends, except public holidays.",
    ),
    TopicSpec(
        "payment-methods",
        "Which payment methods do you accept", ("for", "on", "with", "in"), "online orders?",
        "We accept all major credit cards, bank debit cards, and digital wallet payments on the online checkout.",
    ),
    TopicSpec(
        "order-tracking",
        "How can I track", ("my", "the", "an", "this"), "order after it has shipped?",
        "Use the tracking link in your shipping confirmation email, or open Order History and select Track Shipment.",
    ),
    TopicSpec(
        "email-change",
        "How do I change the email address", ("on", "for", "of", "in"), "my customer profile?",
        "Sign in, open Profile Settings, select Edit next to the email field, and confirm the change from your new inbox.",
    ),
    TopicSpec(
        "gift-cards",
        "Can a gift card be used", ("for", "on", "with", "in"), "purchases from the website?",
        "Yes, gift cards work on the website; enter the card number at checkout and any remaining balance stays on the card.",
    ),
    TopicSpec(
        "loyalty-points",
        "How do loyalty points get added", ("to", "onto", "into", "on"), "my rewards balance?",
        "Loyalty points post to your rewards balance automatically within 24 hours of each qualifying purchase.",
    ),
    TopicSpec(
        "invoice-copy",
        "How can I download a copy", ("of", "for", "from"), "my latest invoice?",
        "Open Billing History in your account and choose Download PDF beside the invoice you need.",
    ),
    TopicSpec(
        "damaged-delivery",
        "What should I do if", ("my", "the", "a", "our"), "package shows up damaged?",
        "Keep the packaging, photograph the damage, and contact support within seven days so we can send a replacement at no charge.",
    ),
    TopicSpec(
        "plan-upgrade",
        "How do I upgrade", ("my", "the", "our", "an"), "existing service plan to premium?",
        "Choose Change Plan under Subscription, pick the premium tier, and the price difference is prorated on your next bill.",
    ),
    TopicSpec(
        "data-export",
        "How can I export", ("my", "the", "all", "our"), "account data to a file?",
        "Go to Privacy Settings and request an export; we email a download link for a complete archive within 48 hours.",
    ),
    TopicSpec(
        "two-factor",
        "How do I enable two factor authentication", ("on", "for", "in", "with"), "my account settings?",
        "Under Security Settings choose Enable Two Factor, scan the code with an authenticator app, and store the backup codes safely.",
    ),
    TopicSpec(
        "trial-length",
        "How long does", ("the", "my", "a", "our"), "free trial last before billing starts?",
        "The free trial runs for 14 days; billing begins on day 15 unless you cancel beforehand.",
    ),
    TopicSpec(
        "cancellation-fee",
        "Is there a fee for cancelling", ("my", "the", "an", "a"), "annual service contract early?",
        "Cancelling an annual contract early carries a fee of one month of service, waived if you move to another plan.",
    ),
    TopicSpec(
        "intl-shipping",
        "Do you ship orders", ("to", "into", "out to"), "addresses outside the United States?",
        "Yes, we ship to most countries; international delivery takes ten to fifteen business days and customs fees are the buyer's responsibility.",
    ),
)


@dataclass(frozen=True)
class PlantedQuestion:
    topic_id: str
    variant: int
    question: str
    answer: str


@dataclass(frozen=True)
class TranscriptPlan:
    """Ground truth for one transcript: what was planted, in order."""

    transcript_id: str
    company_id: str
    planted: tuple[PlantedQuestion, ...]
    noise: tuple[tuple[str, str], ...]
    word_target: int


@dataclass(frozen=True)
class PlantPlan:
    transcripts: tuple[TranscriptPlan, ...]
    topic_ids: tuple[str, ...]
    seed: int

    def topic_occurrences(self) -> dict[str, int]:
        counts = {tid: 0 for tid in self.topic_ids}
        for plan in self.transcripts:
            for p in plan.planted:
                counts[p.topic_id] += 1
        return counts

    def total_planted(self) -> int:
        return sum(len(p.planted) + len(p.noise) for p in self.transcripts)


# --- filler material -------------------------------------------------------
# Customer filler must never end with a question mark: the extraction stage
# treats any customer turn ending in "?" as a question, and filler is meant
# to be invisible to it.

_AGENT_NAMES = ("Dana", "Priya", "Marcus", "Elena", "Theo", "Rosa", "Jamal", "Ingrid")

_CUSTOMER_INTROS = (
    "Hi, I am calling because I have a few questions about my account and a recent order.",
    "Hello, thanks for taking my call, I wanted to sort out a couple of things today.",
    "Good morning, I have some questions I could not find answers to on the website.",
    "Hey there, I need a little help with a few account matters if you have a minute.",
)

_CUSTOMER_FILLER = (
    "Right, that makes sense, let me just write that down before I forget it.",
    "Okay, I see, my neighbor mentioned something similar happened with her order last month.",
    "Sure, no problem, I can wait while you pull that up on your end.",
    "Honestly the weather here has been terrible all week, so I have been stuck indoors catching up on errands.",
    "I appreciate you checking, this phone line is a bit crackly on my end.",
    "One moment please, my dog is barking at the delivery van outside again.",
    "Got it, I will make a note of that in my calendar so I remember.",
    "That sounds reasonable, I just wanted to be sure before I did anything.",
    "Alright, I am looking at the confirmation email you sent me right now.",
    "Thanks for bearing with me, I am juggling a toddler and a laptop over here.",
    "Understood, I figured it was something like that but wanted to double check.",
    "Yes, I still have the original box and the receipt in my desk drawer somewhere.",
    "Fair enough, the app kept spinning last night so I gave up and called instead.",
    "Okay good, my account number ends in the digits you read back to me.",
)

_AGENT_FILLER = (
    "Absolutely, give me just a second while I bring up your account details on my screen.",
    "Of course, and thank you for your patience, our systems are a little slow this morning.",
    "I completely understand, that can definitely be confusing the first time you run into it.",
    "No trouble at all, that is exactly what we are here for, take your time.",
    "Let me make a note on your file so the next agent has the full picture.",
    "I hear that a lot, and it is a very reasonable thing to double check with us.",
    "Thanks for confirming those details, everything matches what I have on file here.",
    "While that loads, is everything else on the account looking the way you expect?",
    "I am glad you called in, this is much easier to walk through together on the phone.",
    "Happy to help with that, and I will email you a summary after we hang up.",
    "Bear with me one moment, I want to make sure I give you the exact policy wording.",
    "You are all set on my side, and I have logged the conversation under your reference number.",
)

_CUSTOMER_ACKS = (
    "Great, that answers it, thank you.",
    "Perfect, that is exactly what I needed to know.",
    "Okay, understood, thanks for clearing that up.",
    "That helps a lot, I appreciate the detail.",
    "Wonderful, that was easier than I expected.",
)

_CLOSING_CUSTOMER = (
    "No, that is everything for today, thanks so much for the help.",
    "That covers it all, I appreciate you walking me through everything.",
    "Nothing else from me, you have been very helpful today.",
)

_GIBBERISH_CONSONANTS = "bcdfghjklmnpqrstvwz"
_GIBBERISH_VOWELS = "aeiou"


def _gibberish_word(rng: random.Random) -> str:
    return "".join(
        rng.choice(_GIBBERISH_CONSONANTS) + rng.choice(_GIBBERISH_VOWELS)
        for _ in range(rng.randint(2, 3))
    )


def _noise_question(rng: random.Random, seen: set[str]) -> tuple[str, str]:
    """A one-off question that belongs to no topic.

    Pure syllable soup: template-free so that no two noise questions share
    enough trigrams to land inside each other's eps-neighborhood.
    """
    while True:
        words = " ".join(_gibberish_word(rng) for _ in range(rng.randint(5, 7)))
        question = words.capitalize() + "?"
        if question not in seen:
            seen.add(question)
            break
    answer = (
        f"The reference {_gibberish_word(rng)} {_gibberish_word(rng)} maps to archive "
        f"shelf {_gibberish_word(rng)} and nothing else is recorded against it."
    )
    return question, answer


def generate_synthetic_corpus(
    seed: int,
    n_transcripts: int = 100,
    n_topics: int = 12,
    paraphrase_rate: float = 0.5,
    noise_rate: float = 0.2,
    companies: Sequence[str] = ("brightline",),
) -> tuple[Corpus, PlantPlan]:
    """Build a deterministic corpus of scripted support calls.

    ``paraphrase_rate`` is the chance a planted question uses a non-base
    variant of its topic; at 0.0 every occurrence is verbatim.  ``noise_rate``
    is the per-transcript chance of one extra unique off-topic question.
    Every requested topic is planted at least twice when capacity allows
    (three planted questions per transcript), so topic clusters always reach
    the default ``min_samples`` of 2.
    """
    if n_transcripts < 1:
        raise InvalidParams("n_transcripts must be at least 1")
    if not 1 <= n_topics <= len(TOPIC_BANK):
        raise InvalidParams(f"n_topics must be between 1 and {len(TOPIC_BANK)}")
    if not 0.0 <= paraphrase_rate <= 1.0:
        raise InvalidParams("paraphrase_rate must be in [0, 1]")
    if not 0.0 <= noise_rate <= 1.0:
        raise InvalidParams("noise_rate must be in [0, 1]")
    if not companies:
        raise InvalidParams("companies must be non-empty")

    rng = random.Random(seed)
    topics = TOPIC_BANK[:n_topics]
    per_transcript = 3
    total_slots = n_transcripts * per_transcript

    # Guarantee coverage first (each topic twice, round-robin over
    # transcripts), then fill leftover slots with random topics.
    slot_topics: list[list[TopicSpec]] = [[] for _ in range(n_transcripts)]
    forced = [t for t in topics for _ in range(2)][:total_slots]
    for k, topic in enumerate(forced):
        slot_topics[k % n_transcripts].append(topic)
    # Fill the rest with random topics and shuffle within each transcript.
    for i in range(n_transcripts):
        while len(slot_topics[i]) < per_transcript:
            slot_topics[i].append(rng.choice(topics))
        rng.shuffle(slot_topics[i])

    base_time = datetime(2025, 3, 3, 9, 0, 0, tzinfo=timezone.utc)
    seen_noise: set[str] = set()
    transcripts: list[Transcript] = []
    plans: list[TranscriptPlan] = []

    for i in range(n_transcripts):
        company = companies[i % len(companies)]
        transcript_id = f"syn-{seed}-{i:04d}"
        word_target = max(650, min(1100, int(rng.gauss(855, 45))))

        planted: list[PlantedQuestion] = []
        for topic in slot_topics[i]:
            if topic.n_variants > 1 and rng.random() < paraphrase_rate:
                variant = rng.randint(1, topic.n_variants - 1)
            else:
                variant = 0
            planted.append(
                PlantedQuestion(topic.topic_id, variant, topic.question(variant), topic.answer)
            )

        noise: list[tuple[str, str]] = []
        if rng.random() < noise_rate:
            noise.append(_noise_question(rng, seen_noise))

        script: list[tuple[Speaker, str]] = [
            (
                Speaker.AGENT,
                f"Thank you for calling {company} customer support, my name is "
                f"{rng.choice(_AGENT_NAMES)}, how can I help you today?",
            ),
            (Speaker.CUSTOMER, rng.choice(_CUSTOMER_INTROS)),
        ]
        for p in planted:
            script.append((Speaker.CUSTOMER, rng.choice(_CUSTOMER_FILLER)))
            script.append((Speaker.AGENT, rng.choice(_AGENT_FILLER)))
            script.append((Speaker.CUSTOMER, p.question))
            script.append((Speaker.AGENT, p.answer))
            script.append((Speaker.CUSTOMER, rng.choice(_CUSTOMER_ACKS)))
        for q, a in noise:
            script.append((Speaker.CUSTOMER, q))
            script.append((Speaker.AGENT, a))
            script.append((Speaker.CUSTOMER, rng.choice(_CUSTOMER_ACKS)))

        closing = [
            (Speaker.AGENT, "Is there anything else I can help you with today?"),
            (Speaker.CUSTOMER, rng.choice(_CLOSING_CUSTOMER)),
            (Speaker.AGENT, "Thank you for calling, have a great day."),
        ]
        current = sum(len(text.split()) for _, text in script + closing)
        while current < word_target:
            filler = [
                (Speaker.CUSTOMER, rng.choice(_CUSTOMER_FILLER)),
                (Speaker.AGENT, rng.choice(_AGENT_FILLER)),
            ]
            script.extend(filler)
            current += sum(len(text.split()) for _, text in filler)
        script.extend(closing)

        transcripts.append(
            Transcript(
                transcript_id=transcript_id,
                company_id=company,
                timestamp=base_time + timedelta(minutes=13 * i),
                turns=tuple(
                    Turn(speaker, text, index) for index, (speaker, text) in enumerate(script)
                ),
            )
        )
        plans.append(
            TranscriptPlan(
                transcript_id=transcript_id,
                company_id=company,
                planted=tuple(planted),
                noise=tuple(noise),
                word_target=word_target,
            )
        )

    corpus = Corpus(transcripts=tuple(transcripts))
    plan = PlantPlan(
        transcripts=tuple(plans),
        topic_ids=tuple(t.topic_id for t in topics),
        seed=seed,
    )
    return corpus, plan


def expected_pairs(plan: PlantPlan) -> dict[str, list[tuple[str, str]]]:
    """Per-transcript ground-truth (question, answer) pairs in turn order."""
    out: dict[str, list[tuple[str, str]]] = {}
    for tp in plan.transcripts:
        pairs = [(p.question, p.answer) for p in tp.planted]
        pairs.extend(tp.noise)
        out[tp.transcript_id] = pairs
    return out


def plan_verdicts(
    plan: PlantPlan, extracted: Mapping[str, Sequence[QAPair]]
) -> tuple[list[JudgeVerdict], dict[str, int], dict[str, str]]:
    """Score extracted pairs against the plant plan.

    Acts as a ground-truth judge: a pair counts as correct when its exact
    (question, answer) text was planted in that transcript.  Returns one
    verdict per planned transcript, the reference counts keyed by transcript
    id, and the transcript-to-company map, ready for metric aggregation.
    """
    truth = expected_pairs(plan)
    verdicts: list[JudgeVerdict] = []
    reference: dict[str, int] = {}
    company_of = {tp.transcript_id: tp.company_id for tp in plan.transcripts}
    for tid, pairs in truth.items():
        remaining = list(pairs)
        predicted = list(extracted.get(tid, ()))
        correct = 0
        for qa in predicted:
            key = (qa.question, qa.answer)
            if key in remaining:
                remaining.remove(key)
                correct += 1
        verdicts.append(
            JudgeVerdict(
                total_correct=correct,
                total_predicted=len(predicted),
                justification="matched against plant plan",
                subject_id=tid,
            )
        )
        reference[tid] = len(pairs)
    return verdicts, reference, company_of


def write_plan_file(plan: PlantPlan, path) -> None:
    """Serialize a plant plan as JSON for the corpus-generation CLI."""
    payload = {
        "seed": plan.seed,
        "topic_ids": list(plan.topic_ids),
        "transcripts": [
            {
                "transcript_id": tp.transcript_id,
                "company_id": tp.company_id,
                "word_target": tp.word_target,
                "planted": [
                    {
                        "topic_id": p.topic_id,
                        "variant": p.variant,
                        "question": p.question,
                        "answer": p.answer,
                    }
                    for p in tp.planted
                ],
                "noise": [{"question": q, "answer": a} for q, a in tp.noise],
            }
            for tp in plan.transcripts
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
