"""Contextualized commonsense causal reasoning over event sequences.

Given an ordered event sequence, the engine estimates for each candidate
event a matched-intervention average treatment effect on the final
event, ranks candidates per sequence, and evaluates against labeled
data. Every language-model interaction goes through a canonical,
hashable HTTP request protocol with a persistent response cache, so full
pipeline runs replay deterministically offline.
"""

__version__ = "0.1.0"

from .errors import BackendError, ColaError, DataError
from .events import Event, EventPair, EventSequence, StoryCorpus, load_dataset

__all__ = [
    "BackendError",
    "ColaError",
    "DataError",
    "Event",
    "EventPair",
    "EventSequence",
    "StoryCorpus",
    "load_dataset",
    "__version__",
]
