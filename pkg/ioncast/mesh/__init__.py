"""Lat-lon grid, icosahedral multi-mesh and the bipartite graphs between them."""
from ioncast.mesh.graphs import (
    BipartiteGraph,
    build_grid2mesh,
    build_mesh2grid,
    edge_features,
    mesh_edge_features,
)
from ioncast.mesh.grid import LatLonGrid
from ioncast.mesh.icosphere import MultiMesh, build_icosphere, build_multimesh

__all__ = [
    "BipartiteGraph",
    "LatLonGrid",
    "MultiMesh",
    "build_grid2mesh",
    "build_icosphere",
    "build_mesh2grid",
    "build_multimesh",
    "edge_features",
    "mesh_edge_features",
]
