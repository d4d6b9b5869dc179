"""
Refined icosahedral meshes and the multi-mesh.

Refinement splits every triangle into four and projects the new edge
midpoints onto the unit sphere. New vertices are appended after the
existing ones, so the vertex ids of level k are a prefix of level k+1 and
edges of coarse levels can be expressed directly in fine-level ids.

The multi-mesh keeps the finest vertex set and the union of the edge sets
of every level, each undirected edge stored as two directed edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from ioncast.errors import ArgumentError
from ioncast.logging_config import get_logger
from ioncast.mesh.geometry import arc_length, rotation_about_z

logger = get_logger(__name__)

MAX_LEVEL = 8


@dataclass
class MultiMesh:
    """
    Icosahedral vertices, per-level faces and a directed edge set.

    Attributes:
        vertices: Unit vectors of the finest level [V x 3].
        faces_per_level: Triangle index arrays [F_k x 3] for levels 0..L,
            all in finest-level vertex ids, outward (counter-clockwise).
        edges: Undirected edges [E x 2] (i < j), lexicographically sorted.
    """

    vertices: np.ndarray
    faces_per_level: list[np.ndarray]
    edges: np.ndarray
    extra_edges: int = field(default=0)

    @property
    def level(self) -> int:
        return len(self.faces_per_level) - 1

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def faces(self) -> np.ndarray:
        """Finest-level triangles."""
        return self.faces_per_level[-1]

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return int(self.edges.shape[0])

    @cached_property
    def senders(self) -> np.ndarray:
        return np.concatenate([self.edges[:, 0], self.edges[:, 1]])

    @cached_property
    def receivers(self) -> np.ndarray:
        return np.concatenate([self.edges[:, 1], self.edges[:, 0]])

    @cached_property
    def max_edge_length(self) -> float:
        """Longest great-circle edge of the finest level (radians)."""
        finest = face_edges(self.faces)
        return float(arc_length(self.vertices[finest[:, 0]], self.vertices[finest[:, 1]]).max())

    def level_edges(self, level: int) -> np.ndarray:
        """Undirected edges of a single refinement level."""
        return face_edges(self.faces_per_level[level])

    def level_vertex_count(self, level: int) -> int:
        """Distinct vertices referenced by the faces of one level."""
        return int(np.unique(self.faces_per_level[level]).size)

    def rotated(self, angle_deg: float) -> MultiMesh:
        """Same topology with every vertex rotated eastward about the polar axis."""
        return MultiMesh(
            vertices=self.vertices @ rotation_about_z(angle_deg).T,
            faces_per_level=self.faces_per_level,
            edges=self.edges,
            extra_edges=self.extra_edges,
        )


def icosahedron() -> tuple[np.ndarray, np.ndarray]:
    """Regular icosahedron on the unit sphere, faces oriented outward."""
    t = (1.0 + 5**0.5) / 2.0
    vertices = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )  # fmt: skip
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )  # fmt: skip
    vertices /= np.linalg.norm(vertices, axis=1, keepdims=True)
    return vertices, orient_outward(vertices, faces)


def orient_outward(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Swap two corners of every triangle whose normal points inward."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    inward = np.einsum("ij,ij->i", a, np.cross(b, c)) < 0
    fixed = faces.copy()
    fixed[inward] = fixed[inward][:, [0, 2, 1]]
    return fixed


def face_edges(faces: np.ndarray) -> np.ndarray:
    """Deduplicated undirected edges [E x 2] (i < j) of a triangle list."""
    pairs = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def subdivide(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    One 1-to-4 refinement.

    Midpoint vertices are appended in sorted-edge order, so the result
    only depends on the input arrays.
    """
    pairs = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    midpoints = vertices[unique[:, 0]] + vertices[unique[:, 1]]
    midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)

    mid = (vertices.shape[0] + inverse).reshape(-1, 3)
    ab, bc, ca = mid[:, 0], mid[:, 1], mid[:, 2]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([b, bc, ab], axis=1),
            np.stack([c, ca, bc], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return np.concatenate([vertices, midpoints]), new_faces


def _refine(level: int) -> tuple[np.ndarray, list[np.ndarray]]:
    if not 0 <= level <= MAX_LEVEL:
        raise ArgumentError(f"mesh level must be in [0, {MAX_LEVEL}], got {level}")
    vertices, faces = icosahedron()
    levels = [faces]
    for _ in range(level):
        vertices, faces = subdivide(vertices, faces)
        levels.append(faces)
    return vertices, levels


def build_icosphere(level: int) -> MultiMesh:
    """
    Single refinement level of the icosphere.

    Args:
        level: 0 (regular icosahedron) to 8.

    Returns:
        MultiMesh whose edge set is the edges of ``level`` only. Coarser face
        lists are kept for per-level inspection.
    """
    vertices, levels = _refine(level)
    return MultiMesh(vertices=vertices, faces_per_level=levels, edges=face_edges(levels[-1]))


def build_multimesh(max_level: int, k_hop: int = 0) -> MultiMesh:
    """
    Finest vertex set with the union of the edges of levels 0..max_level.

    Args:
        max_level: Finest refinement level.
        k_hop: When > 1, also connect finest-level vertices that are at
            most this many finest-level hops apart.
    """
    if max_level < 0:
        raise ArgumentError(f"max_level must be >= 0, got {max_level}")
    vertices, levels = _refine(max_level)
    edges = np.unique(np.concatenate([face_edges(f) for f in levels]), axis=0)
    extra = 0
    if k_hop > 1:
        hop_edges = k_hop_edges(face_edges(levels[-1]), vertices.shape[0], k_hop)
        merged = np.unique(np.concatenate([edges, hop_edges]), axis=0)
        extra = merged.shape[0] - edges.shape[0]
        edges = merged
    logger.debug(
        "multimesh_built",
        max_level=max_level,
        vertices=vertices.shape[0],
        edges=edges.shape[0],
        k_hop_edges=extra,
    )
    return MultiMesh(vertices=vertices, faces_per_level=levels, edges=edges, extra_edges=extra)


def k_hop_edges(edges: np.ndarray, n_vertices: int, k: int) -> np.ndarray:
    """Undirected pairs (i < j) within ``k`` hops over ``edges``."""
    ones = np.ones(edges.shape[0] * 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adjacency = sparse.csr_matrix((ones, (rows, cols)), shape=(n_vertices, n_vertices))
    reach = adjacency.copy()
    frontier = adjacency.copy()
    for _ in range(k - 1):
        frontier = frontier @ adjacency
        frontier.data[:] = 1.0
        reach = reach + frontier
        reach.data[:] = 1.0
    upper = sparse.triu(reach, k=1).tocoo()
    pairs = np.stack([upper.row, upper.col], axis=1).astype(np.int64)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def spherical_triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Solid angle of each triangle (tan(E/2) form for unit vectors)."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    triple = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    denom = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(triple, denom)


def describe_levels(mesh: MultiMesh) -> list[dict[str, float]]:
    """Per-level V/E/F and edge-length statistics in degrees."""
    rows = []
    for level, faces in enumerate(mesh.faces_per_level):
        edges = face_edges(faces)
        n_vertices = mesh.level_vertex_count(level)
        lengths = np.degrees(arc_length(mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]))
        rows.append(
            {
                "level": level,
                "vertices": n_vertices,
                "edges": int(edges.shape[0]),
                "faces": int(faces.shape[0]),
                "euler": n_vertices - int(edges.shape[0]) + int(faces.shape[0]),
                "edge_min_deg": float(lengths.min()),
                "edge_mean_deg": float(lengths.mean()),
                "edge_max_deg": float(lengths.max()),
            }
        )
    return rows
