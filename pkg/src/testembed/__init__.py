"""Contrastive time-series token embeddings aligned to a frozen toy LM's word space."""

from .config import RunConfig
from .data import AugmentConfig, TimeSeries, TsToken, augment_strong, augment_weak, load_dataset, sample_pairs, segment
from .encoder import Decoder, Encoder, EncoderConfig, ProjectionHead
from .errors import TestEmbedError
from .pipeline import Checkpoint, evaluate, match_words, train_phase1, train_phase2
from .promptlm import FrozenLM, SoftPrompt, forward_with_prompt, init_prompt
from .prototypes import VocabMatrix, nearest_words, pca_prototypes

__version__ = "0.1.0"
