"""Python interface to the uqasr C++ core.

The heavy lifting (feature extraction, acoustic models, HMM decoding, PGD
attacks, uncertainty measures and detection) lives in the compiled
``_core`` module; this package re-exports it.
"""

from ._core import (  # noqa: F401
    ArtifactError,
    ConfigError,
    NumericError,
    ParseError,
    Pipeline,
    PreconditionError,
    Recognizer,
    ShapeError,
    UqasrError,
    WavError,
    forced_align,
    frame_akld,
    frame_entropy,
    frame_mutual_information,
    frame_variance,
    load_wav,
    mfcc,
    roc_auroc,
    save_wav,
    scores_from_samples,
    synth_utterance,
    viterbi_decode,
    word_accuracy,
)

__version__ = "0.1.0"
