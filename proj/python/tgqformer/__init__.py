"""Python bindings for the tgq connector core."""

from ._core import (  # noqa: F401
    ConfigError,
    ContractError,
    DimensionError,
    IoError,
    LookupError,
    NumericError,
    StateError,
    TgqError,
    UsageError,
    centered_sigmoid,
    config_entries,
    corrupt_corpus,
    directory_hash,
    embed,
    evaluate,
    gen_corpus,
    gradcheck,
    info_nce,
    rank,
    read_embeddings,
    redundancy_loss,
    severity_spec,
    t_g,
    train,
)
