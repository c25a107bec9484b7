"""Reference LM server for the engine's backend HTTP protocol.

Serves fill-mask scoring, sampling, span infilling, token likelihoods,
pseudo log-likelihood, and heuristic SRL over real masked/causal
language models loaded from local checkpoints.
"""

__version__ = "0.1.0"
