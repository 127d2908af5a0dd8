"""FAT-loss metric learning: losses, training, distillation and evaluation."""

from ._core import (
    ConfigError,
    DegenerateClusterError,
    DegenerateVectorError,
    EmptyTripletSetError,
    EmptyTrustedSetError,
    FatlabError,
    InvalidArgumentError,
    InvalidBatchError,
    IoError,
    MissingClusterError,
    TrainingDivergenceError,
    ValidationError,
    benchmark_loss_scaling,
    compute_centroids,
    count_pairs_hard_mining,
    count_triplets_vanilla,
    distill,
    entropy,
    euclidean_distance,
    evaluate_retrieval,
    fat_batch,
    generate_dataset,
    resolve_config,
    run,
    softmax,
    train,
    triplet_batch_all,
    triplet_batch_hard,
)

__all__ = [name for name in dir() if not name.startswith("_")]
