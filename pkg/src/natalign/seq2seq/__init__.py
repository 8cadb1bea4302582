from .checkpoint import Checkpoint, CheckpointError, load_model
from .decoding import (
    Sample,
    Translation,
    beam_search,
    decode_beam,
    greedy_batch,
    model_stepper,
    sample_batch,
    sample_sequences,
    sample_translation,
    translate,
)
from .model import (
    ModelConfig,
    Seq2SeqModel,
    nll_loss,
    nll_per_sentence,
    sequence_log_prob,
    token_log_probs_batch,
)
from .training import (
    EarlyStopping,
    TrainConfig,
    TrainingDiverged,
    build_model,
    lr_at,
    train_supervised,
    train_tagged,
    validation_loss,
)

__all__ = [
    "Checkpoint", "CheckpointError", "load_model", "Sample", "Translation", "beam_search",
    "decode_beam", "greedy_batch", "model_stepper", "sample_batch", "sample_sequences",
    "sample_translation", "translate", "ModelConfig", "Seq2SeqModel", "nll_loss",
    "nll_per_sentence", "sequence_log_prob", "token_log_probs_batch", "EarlyStopping",
    "TrainConfig", "TrainingDiverged", "build_model", "lr_at", "train_supervised",
    "train_tagged", "validation_loss",
]
