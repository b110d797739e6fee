"""Structure-aware graph-to-sequence encoding and projector alignment."""

from .errors import (
    ConfigError,
    ConvergenceError,
    GraphFormatError,
    LlgaError,
    SequenceFormatError,
    TrainingError,
    ValidationError,
)
from .graph_store import (
    FeatureMatrix,
    GraphStore,
    LinkPair,
    Split,
    load_edge_list,
    load_features,
    make_splits,
    sample_link_pairs,
    write_features,
)
from .ho_template import HOConfig, HopEmbeddingTable, assemble_ho, compute_hops
from .laplacian import (
    LaplacianBasis,
    TreeShape,
    build_basis,
    cached_basis,
    eigendecompose,
    normalized_laplacian,
    tree_adjacency,
)
from .nd_template import (
    PAD,
    EmbeddingSequence,
    NDConfig,
    NodeSequence,
    assemble_center_only,
    assemble_nd,
    build_tree,
)
from .prompts import (
    ChatPrompt,
    EncodedSample,
    Tokenizer,
    build_lp_prompt,
    build_nc_prompt,
    build_nd_prompt,
    build_vocab,
    cosine_similarity,
    description_label_accuracy,
    encode_sample,
)
from .trainer import (
    LossCurve,
    MockDecoder,
    TrainConfig,
    answer_loss,
    context_vector,
    evaluate,
    greedy_decode,
    make_decoder,
    train,
)

__version__ = "0.1.0"
