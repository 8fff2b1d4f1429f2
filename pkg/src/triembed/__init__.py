"""Image/audio/text embeddings aligned through matchmaps and margin ranking losses."""
from .corpus import Corpus, SyntheticConfig, generate_synthetic_corpus, load_corpus, write_corpus
from .encoders import AudioEncoder, ImageEncoder, ImageGridFeatures, SequenceFeatures, TextTable
from .loss import MarginConfig, Minibatch, bimodal_loss, sample_impostors, trimodal_loss
from .matchmap import MODES, compute_matchmap, pool_similarity, similarity
from .pipeline import PRESETS, TrainConfig, evaluate, train
from .retrieval import recall_at_k, recall_report, similarity_matrix

__version__ = "0.1.0"

__all__ = [
    "AudioEncoder", "Corpus", "ImageEncoder", "ImageGridFeatures", "MODES", "MarginConfig", "Minibatch",
    "PRESETS", "SequenceFeatures", "SyntheticConfig", "TextTable", "TrainConfig", "bimodal_loss",
    "compute_matchmap", "evaluate", "generate_synthetic_corpus", "load_corpus", "pool_similarity",
    "recall_at_k", "recall_report", "sample_impostors", "similarity", "similarity_matrix", "train",
    "trimodal_loss", "write_corpus",
]
