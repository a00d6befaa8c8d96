"""FAQ knowledge-base construction from customer support call transcripts.

Pipeline: extract QA pairs per transcript, cluster near-duplicate questions
over embeddings, pick one representative per cluster, then screen the result
into a reviewed, self-updating knowledge store.
"""

__version__ = "0.1.0"
