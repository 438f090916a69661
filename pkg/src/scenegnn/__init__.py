"""Indoor/outdoor scene classification from object-detection output.

Builds a space-semantic graph per scene (nodes: object label + size,
edges: nearest-neighborhood distances) and classifies it with one of
three trainable GNN variants.
"""

from .detections import (
    Detection,
    SceneClass,
    SceneSample,
    SyntheticConfig,
    generate_synthetic,
    load_scenes,
    save_scenes,
    split_dataset,
)
from .graph_builder import (
    DistanceMatrix,
    SceneGraph,
    build_graph,
    diagonal,
    encode_node_features,
    min_distance,
    pairwise_distances,
)
from .gnn_models import (
    GCNModel,
    GINModel,
    LafParams,
    ModelConfig,
    build_model,
    classify_log_probs,
    laf_aggregate,
    normalize_adjacency,
    param_count,
)
from .training import (
    Checkpoint,
    Metrics,
    TrainConfig,
    cross_entropy_loss,
    evaluate,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)
from .experiments import (
    AblationEntry,
    BenchmarkReport,
    SweepResult,
    ablation_class_count,
    benchmark,
    sweep_beta,
)

__version__ = "0.1.0"
