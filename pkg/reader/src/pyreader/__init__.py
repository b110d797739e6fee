"""Read-only integration reader for LLGA sequence files.

Parses the binary formats produced by the llga toolchain (sequence files
and LGFM feature matrices) for downstream training stacks, and recomputes
hop-overview embeddings from the raw inputs as an independent
cross-implementation check. This package never writes either format.
"""

from .reader import (
    SequenceFileError,
    SequenceFileHeader,
    SequenceRecordView,
    open_sequence_file,
    read_feature_matrix,
    recompute_ho,
)

__version__ = "0.1.0"

__all__ = [
    "SequenceFileError",
    "SequenceFileHeader",
    "SequenceRecordView",
    "open_sequence_file",
    "read_feature_matrix",
    "recompute_ho",
]
