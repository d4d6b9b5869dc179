"""
Bipartite graphs between the lat-lon grid and the multi-mesh.

grid -> mesh: a grid node sends to every mesh vertex within
    radius_scale x (longest finest-level mesh edge) of great-circle distance.
mesh -> grid: every grid node receives from the 3 vertices of the
    finest-level triangle that contains it.

Edge features (both graphs and the mesh itself) are the sender position
expressed in the receiver's local east-north-up frame plus the
great-circle edge length, all divided by the longest finest-level edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree

from ioncast.errors import ConstructionError
from ioncast.logging_config import get_logger
from ioncast.mesh.geometry import arc_length, chord_for_arc, local_enu_frame
from ioncast.mesh.grid import LatLonGrid
from ioncast.mesh.icosphere import MultiMesh
from ioncast.metrics import record_mesh2grid_fallback

logger = get_logger(__name__)

EDGE_FEATURES = 4
CANDIDATE_VERTICES = 6
CONTAINMENT_TOL = 1e-10


class EdgeIndex(Protocol):
    senders: np.ndarray
    receivers: np.ndarray


@dataclass
class BipartiteGraph:
    """
    Directed edges from a source node set to a destination node set.

    ``weights`` holds the barycentric weight of each mesh->grid edge and
    is empty for the radius graph.
    """

    senders: np.ndarray
    receivers: np.ndarray
    n_senders: int
    n_receivers: int
    features: np.ndarray = field(default_factory=lambda: np.zeros((0, EDGE_FEATURES)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fallbacks: int = 0

    @property
    def n_edges(self) -> int:
        return int(self.senders.shape[0])

    def receiver_degree(self) -> np.ndarray:
        return np.bincount(self.receivers, minlength=self.n_receivers)

    def sender_degree(self) -> np.ndarray:
        return np.bincount(self.senders, minlength=self.n_senders)


def edge_features(
    graph: EdgeIndex,
    source_positions: np.ndarray,
    dest_positions: np.ndarray,
    length_scale: float,
) -> np.ndarray:
    """
    Geometric features per edge [E x 4].

    Args:
        graph: Anything with ``senders``/``receivers`` index arrays.
        source_positions: Unit vectors of the sender node set.
        dest_positions: Unit vectors of the receiver node set.
        length_scale: Divisor for all four features (longest mesh edge).

    Returns:
        East, north and up components of (sender - receiver) in the
        receiver's local frame, then the great-circle length.
    """
    src = source_positions[graph.senders]
    dst = dest_positions[graph.receivers]
    east, north, up = local_enu_frame(dst)
    displacement = src - dst
    out = np.stack(
        [
            np.einsum("ij,ij->i", displacement, east),
            np.einsum("ij,ij->i", displacement, north),
            np.einsum("ij,ij->i", displacement, up),
            arc_length(src, dst),
        ],
        axis=-1,
    )
    return out / length_scale


def build_grid2mesh(grid: LatLonGrid, mesh: MultiMesh, radius_scale: float = 0.6) -> BipartiteGraph:
    """
    Radius graph from grid nodes to mesh vertices.

    Mesh vertices left without an incoming edge get one from their
    nearest grid node, so every mesh latent receives information.

    Raises:
        ConstructionError: a grid node has no mesh vertex within the radius.
    """
    if radius_scale <= 0:
        raise ConstructionError(f"radius_scale must be positive, got {radius_scale}")
    max_arc = radius_scale * mesh.max_edge_length
    tree = cKDTree(mesh.vertices)
    neighbours = tree.query_ball_point(grid.positions, r=chord_for_arc(max_arc) * (1 + 1e-9) + 1e-12)

    senders: list[np.ndarray] = []
    receivers: list[np.ndarray] = []
    for node, found in enumerate(neighbours):
        found = np.sort(np.asarray(found, dtype=np.int64))
        if found.size:
            arcs = arc_length(grid.positions[node][None, :], mesh.vertices[found])
            found = found[arcs <= max_arc]
        if found.size == 0:
            raise ConstructionError(
                f"grid node {node} has no mesh vertex within {np.degrees(max_arc):.3f} deg; "
                f"increase radius_scale (currently {radius_scale})"
            )
        senders.append(np.full(found.size, node, dtype=np.int64))
        receivers.append(found)
    s = np.concatenate(senders)
    r = np.concatenate(receivers)

    covered = np.zeros(mesh.n_vertices, dtype=bool)
    covered[r] = True
    if not covered.all():
        orphans = np.flatnonzero(~covered)
        _, nearest = cKDTree(grid.positions).query(mesh.vertices[orphans])
        s = np.concatenate([s, np.asarray(nearest, dtype=np.int64)])
        r = np.concatenate([r, orphans])
        order = np.lexsort((r, s))
        s, r = s[order], r[order]
        logger.debug("grid2mesh_orphans_connected", count=int(orphans.size))

    graph = BipartiteGraph(senders=s, receivers=r, n_senders=grid.n_nodes, n_receivers=mesh.n_vertices)
    features = edge_features(graph, grid.positions, mesh.vertices, mesh.max_edge_length)
    return replace(graph, features=features)


def _barycentric(points: np.ndarray, corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Normalized weights w with p ~ sum w_k c_k, plus the raw weight sum.

    ``corners`` is [N x 3 x 3], one row per corner. A negative sum means the
    point lies on the far side of the sphere from the triangle.
    """
    raw = np.linalg.solve(np.transpose(corners, (0, 2, 1)), points[..., None])[..., 0]
    total = raw.sum(axis=-1)
    safe = np.where(np.abs(total) < 1e-300, 1.0, total)
    return raw / safe[:, None], total


def build_mesh2grid(mesh: MultiMesh, grid: LatLonGrid) -> BipartiteGraph:
    """
    Containing-triangle graph from mesh vertices to grid nodes.

    Each grid node receives exactly 3 edges (E = 3 * n_grid). Candidate
    triangles are those touching the nearest mesh vertices; among
    containing candidates the lowest face index wins. If no candidate
    contains the node numerically, its 3 nearest vertices are used, a
    warning is logged and the fallback counter is incremented.
    """
    faces = mesh.faces
    n_faces = faces.shape[0]
    incidence: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    for face_id, corners in enumerate(faces):
        for vertex in corners:
            incidence[vertex].append(face_id)

    tree = cKDTree(mesh.vertices)
    k = min(CANDIDATE_VERTICES, mesh.n_vertices)
    _, nearest = tree.query(grid.positions, k=k)
    nearest = np.asarray(nearest).reshape(grid.n_nodes, k)

    chosen_face = np.full(grid.n_nodes, -1, dtype=np.int64)
    weights = np.zeros((grid.n_nodes, 3))
    for node in range(grid.n_nodes):
        candidates = np.unique(np.concatenate([incidence[v] for v in nearest[node]]))
        corners = mesh.vertices[faces[candidates]]
        w, total = _barycentric(np.repeat(grid.positions[node][None, :], candidates.size, axis=0), corners)
        inside = np.all(w >= -CONTAINMENT_TOL, axis=1) & (total > 0)
        if inside.any():
            first = int(np.flatnonzero(inside)[0])
            chosen_face[node] = candidates[first]
            weights[node] = np.clip(w[first], 0.0, None)
            weights[node] /= weights[node].sum()

    senders = np.zeros((grid.n_nodes, 3), dtype=np.int64)
    hit = chosen_face >= 0
    senders[hit] = faces[chosen_face[hit]]
    fallback = np.flatnonzero(~hit)
    if fallback.size:
        _, near3 = tree.query(grid.positions[fallback], k=3)
        senders[fallback] = np.asarray(near3, dtype=np.int64)
        w, _ = _barycentric(grid.positions[fallback], mesh.vertices[senders[fallback]])
        w = np.clip(w, 0.0, None)
        w_sum = w.sum(axis=1, keepdims=True)
        weights[fallback] = np.where(w_sum > 0, w / np.where(w_sum > 0, w_sum, 1.0), 1.0 / 3.0)
        record_mesh2grid_fallback(int(fallback.size))
        logger.warning("mesh2grid_containment_fallback", nodes=int(fallback.size), faces=n_faces)

    receivers = np.repeat(np.arange(grid.n_nodes, dtype=np.int64), 3)
    graph = BipartiteGraph(
        senders=senders.reshape(-1),
        receivers=receivers,
        n_senders=mesh.n_vertices,
        n_receivers=grid.n_nodes,
        weights=weights.reshape(-1),
        fallbacks=int(fallback.size),
    )
    features = edge_features(graph, mesh.vertices, grid.positions, mesh.max_edge_length)
    return replace(graph, features=features)


def mesh_edge_features(mesh: MultiMesh) -> np.ndarray:
    """Edge features of the multi-mesh's directed edges."""
    return edge_features(mesh, mesh.vertices, mesh.vertices, mesh.max_edge_length)


def degree_summary(graph: BipartiteGraph) -> dict[str, float]:
    """Degree statistics for mesh-info."""
    incoming = graph.receiver_degree()
    outgoing = graph.sender_degree()
    return {
        "edges": graph.n_edges,
        "receiver_degree_min": int(incoming.min()) if incoming.size else 0,
        "receiver_degree_mean": float(incoming.mean()) if incoming.size else 0.0,
        "receiver_degree_max": int(incoming.max()) if incoming.size else 0,
        "sender_degree_min": int(outgoing.min()) if outgoing.size else 0,
        "sender_degree_mean": float(outgoing.mean()) if outgoing.size else 0.0,
        "fallbacks": graph.fallbacks,
    }
