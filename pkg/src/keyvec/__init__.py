"""KeyVec: fixed-length document embeddings that keep a document's key content.

A Reader network scores every sentence's salience (CNN sentence encoder,
BiLSTM context, logistic head); an Encoder pools the contextual states with
salience-proportional weights into the document vector and learns to predict
the document's keywords from it. Training labels are generated from gold
summaries; evaluation covers cosine-based retrieval and k-means clustering.
"""

__version__ = "0.1.0"

from .corpus import (
    Document,
    RawDocument,
    TfIdfModel,
    Vocabulary,
    build_vocabulary,
    compute_tfidf,
    encode_document,
    tfidf_vector,
    tokenize,
)
from .encoder import Encoder, embed_document
from .errors import KeyVecError
from .nn import ParamStore, Tape, finite_difference_check, sgd_step
from .reader import ModelConfig, Reader, reader_loss
from .supervision import (
    SupervisionConfig,
    TrainingExample,
    build_training_set,
    select_keywords,
    select_salient_sentences,
    sentence_similarity,
)
from .train import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "Checkpoint",
    "Document",
    "Encoder",
    "KeyVecError",
    "ModelConfig",
    "ParamStore",
    "RawDocument",
    "Reader",
    "SupervisionConfig",
    "Tape",
    "TfIdfModel",
    "TrainConfig",
    "TrainingExample",
    "Vocabulary",
    "build_training_set",
    "build_vocabulary",
    "compute_tfidf",
    "embed_document",
    "encode_document",
    "finite_difference_check",
    "load_checkpoint",
    "reader_loss",
    "save_checkpoint",
    "select_keywords",
    "select_salient_sentences",
    "sentence_similarity",
    "sgd_step",
    "tfidf_vector",
    "tokenize",
    "train",
]
