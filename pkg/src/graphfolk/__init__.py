"""graphfolk: social-graph embeddings via random walks and skip-gram
negative sampling, plus occupational-class and income prediction."""

from .graph import Graph, build_undirected, degree, load_edge_list, prune_by_in_degree
from .predict import (
    EvalReport,
    FoldPlan,
    LabeledDataset,
    concat_features,
    evaluate_classification,
    evaluate_regression,
    fit_kernel_ridge,
    fit_logreg_ova,
    fit_ridge,
    make_fold_plan,
    misclassification_matrix,
    nested_cv,
)
from .sgns import (
    EmbeddingModel,
    NoiseDistribution,
    SgnsConfig,
    build_noise_distribution,
    export_embedding,
    extract_pairs,
    load_vectors,
    sgns_pair_update,
    train,
)
from .synth import SbmSpec, generate_sbm
from .walks import WalkConfig, WalkCorpus, generate_corpus, random_walk

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "build_undirected",
    "degree",
    "load_edge_list",
    "prune_by_in_degree",
    "WalkConfig",
    "WalkCorpus",
    "generate_corpus",
    "random_walk",
    "SgnsConfig",
    "EmbeddingModel",
    "NoiseDistribution",
    "build_noise_distribution",
    "extract_pairs",
    "sgns_pair_update",
    "train",
    "export_embedding",
    "load_vectors",
    "LabeledDataset",
    "FoldPlan",
    "EvalReport",
    "concat_features",
    "fit_logreg_ova",
    "fit_ridge",
    "fit_kernel_ridge",
    "evaluate_classification",
    "evaluate_regression",
    "misclassification_matrix",
    "make_fold_plan",
    "nested_cv",
    "SbmSpec",
    "generate_sbm",
    "__version__",
]
