import pytest

from kbassist.embedding import HashedTrigramProvider
from kbassist.synth import generate_synthetic_corpus


@pytest.fixture(scope="session")
def embedder():
    return HashedTrigramProvider()


@pytest.fixture(scope="session")
def seed42_corpus():
    """The reference 100-transcript corpus used by the end-to-end checks."""
    return generate_synthetic_corpus(
        seed=42, n_transcripts=100, n_topics=12, paraphrase_rate=0.5, noise_rate=0.2
    )
