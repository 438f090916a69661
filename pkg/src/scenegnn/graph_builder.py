"""Space-semantic graph construction from detection boxes.

Nodes carry an object's label and its normalized bounding-box diagonal;
edges connect each object to the objects near its closest neighbor and
carry the raw center-to-center distance.  All lengths are normalized by
the image diagonal so graphs are resolution independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detections import Detection, SceneSample
from .errors import EmptyScene, LabelOutOfRange, NoNeighbor


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise center distances in units of the image diagonal."""

    values: np.ndarray  # (n, n), symmetric, zero diagonal

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SceneGraph:
    """Graph view of one scene.

    adjacency stores the raw normalized distance on existing edges and 0
    elsewhere; edge_mask disambiguates zero-distance edges (co-located
    objects) from absent edges.
    """

    features: np.ndarray  # (n, vocab_size + 1)
    adjacency: np.ndarray  # (n, n) float
    edge_mask: np.ndarray  # (n, n) bool
    labels: np.ndarray  # (n,) int
    diagonals: np.ndarray  # (n,) float

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def degrees(self) -> np.ndarray:
        return self.edge_mask.sum(axis=1)


def diagonal(det: Detection, image_w: float, image_h: float) -> float:
    """Bounding-box diagonal as a fraction of the image diagonal, in (0, sqrt(2)]."""
    return math.hypot(det.w, det.h) / math.hypot(image_w, image_h)


def pairwise_distances(scene: SceneSample) -> DistanceMatrix:
    """Euclidean distances between box centers, normalized by the image diagonal."""
    n = len(scene.detections)
    if n == 0:
        raise EmptyScene(f"scene {scene.scene_id!r} has no detections")
    centers = np.array([d.center() for d in scene.detections], dtype=np.float64)
    dx = centers[:, 0][:, None] - centers[:, 0][None, :]
    dy = centers[:, 1][:, None] - centers[:, 1][None, :]
    img_diag = math.hypot(scene.image_w, scene.image_h)
    values = np.sqrt(dx * dx + dy * dy) / img_diag
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(values=values)


def min_distance(i: int, distances: DistanceMatrix) -> float:
    """Distance from node i to its nearest other node."""
    n = distances.n
    if n < 2:
        raise NoNeighbor("a single-node scene has no neighbor distances")
    row = distances.values[i]
    return float(min(row[j] for j in range(n) if j != i))


def encode_node_features(scene: SceneSample, vocab_size: int) -> np.ndarray:
    """One-hot label concatenated with the normalized diagonal, per node.

    Two same-label objects of different size share the one-hot block and
    differ only in the last column — the size-fluctuation signal the
    classifier exploits.
    """
    n = len(scene.detections)
    if n == 0:
        raise EmptyScene(f"scene {scene.scene_id!r} has no detections")
    features = np.zeros((n, vocab_size + 1), dtype=np.float64)
    for i, det in enumerate(scene.detections):
        if det.label_id >= vocab_size:
            raise LabelOutOfRange(
                f"label {det.label_id} out of range for vocabulary size {vocab_size}"
            )
        features[i, det.label_id] = 1.0
        features[i, vocab_size] = diagonal(det, scene.image_w, scene.image_h)
    return features


def build_graph(scene: SceneSample, beta: float = 0.1, vocab_size: int = 80) -> SceneGraph:
    """Build the space-semantic graph of a scene.

    Node i proposes an edge to every node j whose distance satisfies
    d(i, j) <= dmin(i) + beta * dmin(i), where dmin(i) is i's nearest-node
    distance.  Proposals are directed; the final edge set is their
    symmetric union, which is what the adjacency matrix of the graph
    represents.  At any beta >= 0 the nearest neighbor always qualifies,
    so every node in a multi-node scene has at least one edge.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    distances = pairwise_distances(scene)
    n = distances.n
    features = encode_node_features(scene, vocab_size)
    labels = np.array([d.label_id for d in scene.detections], dtype=np.int64)
    diagonals = features[:, vocab_size].copy()

    if n == 1:
        edge_mask = np.zeros((1, 1), dtype=bool)
    else:
        d = distances.values
        off_diag = d + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
        dmin = off_diag.min(axis=1)
        threshold = dmin + beta * dmin
        proposed = (d <= threshold[:, None]) & ~np.eye(n, dtype=bool)
        edge_mask = proposed | proposed.T

    adjacency = np.where(edge_mask, distances.values, 0.0)
    return SceneGraph(
        features=features,
        adjacency=adjacency,
        edge_mask=edge_mask,
        labels=labels,
        diagonals=diagonals,
    )


def graph_to_dict(graph: SceneGraph) -> dict:
    """JSON-friendly dump of a graph for debugging."""
    return {
        "n": graph.n,
        "labels": graph.labels.tolist(),
        "diagonals": graph.diagonals.tolist(),
        "features": graph.features.tolist(),
        "adjacency": graph.adjacency.tolist(),
        "edges": [
            [int(i), int(j)]
            for i in range(graph.n)
            for j in range(i + 1, graph.n)
            if graph.edge_mask[i, j]
        ],
    }
