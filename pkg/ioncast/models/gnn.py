"""
Encode-process-decode graph forecaster.

    grid nodes --(grid2mesh, 1 round)--> mesh nodes
    mesh nodes --(multi-mesh, L rounds)--> mesh nodes
    mesh nodes --(mesh2grid, 1 round)--> grid nodes --(linear head)--> residual maps

Every round updates edges from (edge, sender, receiver) latents, sums the
edge latents into their receivers and updates the receivers, with
residual connections around both updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ioncast.config import GnnConfig, ModelConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer
from ioncast.errors import ConstructionError, DimensionError
from ioncast.logging_config import get_logger
from ioncast.mesh.geometry import xyz_to_lat_lon
from ioncast.mesh.graphs import BipartiteGraph, build_grid2mesh, build_mesh2grid, mesh_edge_features
from ioncast.mesh.grid import LatLonGrid
from ioncast.mesh.icosphere import MultiMesh, build_multimesh
from ioncast.models.base import Forecaster
from ioncast.models.layers import Bound, Params, init_linear, init_mlp, linear, maps_to_nodes, mlp, nodes_to_maps
from ioncast.tensor import Tensor, ops

logger = get_logger(__name__)

GRID_STATIC_FEATURES = 4
MESH_STATIC_FEATURES = 2


@dataclass
class GraphSet:
    """The three graphs a GNN runs on."""

    mesh: MultiMesh
    grid2mesh: BipartiteGraph
    mesh2grid: BipartiteGraph
    mesh_edge_features: np.ndarray  # [2E x 4]
    mesh_static: np.ndarray  # [V x 2] sin/cos latitude

    @classmethod
    def build(cls, grid: LatLonGrid, config: GnnConfig, mesh: MultiMesh | None = None) -> GraphSet:
        mesh = mesh or build_multimesh(config.multimesh_levels, config.k_hop)
        lat, _ = xyz_to_lat_lon(mesh.vertices)
        rad = np.radians(lat)
        return cls(
            mesh=mesh,
            grid2mesh=build_grid2mesh(grid, mesh, config.radius_scale),
            mesh2grid=build_mesh2grid(mesh, grid),
            mesh_edge_features=mesh_edge_features(mesh),
            mesh_static=np.stack([np.sin(rad), np.cos(rad)], axis=-1),
        )


def input_width(context_len: int, n_predicted: int, n_forcing: int, n_coordinate: int) -> int:
    """Grid-node feature width: context predicted channels, context+1 forcing frames, static maps."""
    return context_len * n_predicted + (context_len + 1) * n_forcing + GRID_STATIC_FEATURES + n_coordinate


def build_grid_inputs(
    window: np.ndarray,
    forcing_next: np.ndarray,
    spec: ChannelSpec,
    grid_static: np.ndarray,
) -> Tensor:
    """
    Per-node features [n_grid x d_in].

    Columns: predicted channels of every context frame (frame-major),
    forcing channels of every context frame and of the prediction time,
    the geographic static features, then the coordinate channels of the
    last frame.
    """
    predicted = window[:, spec.predicted_indices]
    forcing = np.concatenate([window[:, spec.forcing_indices], forcing_next[None]], axis=0)
    coordinates = window[-1, spec.coordinate_indices]
    columns = [maps_to_nodes(predicted), maps_to_nodes(forcing), grid_static, maps_to_nodes(coordinates)]
    return Tensor(np.concatenate(columns, axis=1))


def _round(
    edges: Tensor,
    senders: Tensor,
    receivers: Tensor,
    graph_senders: np.ndarray,
    graph_receivers: np.ndarray,
    p: Bound,
    name: str,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> tuple[Tensor, Tensor]:
    """One message-passing round; returns (edge latents, receiver latents)."""
    features = ops.concat([edges, ops.gather(senders, graph_senders), ops.gather(receivers, graph_receivers)], axis=1)
    edges = ops.add(edges, mlp(features, p, f"{name}.edge", dropout, rng, training))
    aggregated = ops.scatter_sum(edges, graph_receivers, receivers.shape[0])
    update = mlp(ops.concat([receivers, aggregated], axis=1), p, f"{name}.node", dropout, rng, training)
    return edges, ops.add(receivers, update)


class GnnForecaster(Forecaster):
    architecture = "gnn"

    def __init__(
        self,
        spec: ChannelSpec,
        grid: LatLonGrid,
        normalizer: Normalizer,
        config: ModelConfig,
        params: Params | None = None,
        seed: int = 0,
        graphs: GraphSet | None = None,
    ) -> None:
        self.gnn = config.gnn
        self.graphs = graphs or GraphSet.build(grid, config.gnn)
        self.grid_static = grid.static_features()
        self.d_in = input_width(
            config.gnn.context_len,
            len(spec.predicted_indices),
            len(spec.forcing_indices),
            len(spec.coordinate_indices),
        )
        super().__init__(spec, grid, normalizer, config, params, seed)
        logger.debug(
            "gnn_built",
            mesh_vertices=self.graphs.mesh.n_vertices,
            grid2mesh_edges=self.graphs.grid2mesh.n_edges,
            mesh2grid_edges=self.graphs.mesh2grid.n_edges,
            d_in=self.d_in,
            parameters=self.parameter_count(),
        )

    def init_params(self, rng: np.random.Generator) -> Params:
        latent = self.gnn.latent_dim
        edge_features = self.graphs.grid2mesh.features.shape[1]
        params: Params = {}
        init_mlp(params, "grid_embed", self.d_in, latent, latent, rng)
        init_mlp(params, "mesh_embed", MESH_STATIC_FEATURES, latent, latent, rng)
        init_mlp(params, "g2m_edge_embed", edge_features, latent, latent, rng)
        init_mlp(params, "encoder.edge", 3 * latent, latent, latent, rng)
        init_mlp(params, "encoder.node", 2 * latent, latent, latent, rng)
        init_mlp(params, "encoder.grid", latent, latent, latent, rng)
        init_mlp(params, "mesh_edge_embed", edge_features, latent, latent, rng)
        for layer in range(self.gnn.processor_layers):
            init_mlp(params, f"processor.{layer}.edge", 3 * latent, latent, latent, rng)
            init_mlp(params, f"processor.{layer}.node", 2 * latent, latent, latent, rng)
        init_mlp(params, "m2g_edge_embed", edge_features, latent, latent, rng)
        init_mlp(params, "decoder.edge", 3 * latent, latent, latent, rng)
        init_mlp(params, "decoder.node", 2 * latent, latent, latent, rng)
        init_linear(params, "head", latent, len(self.spec.predicted_indices), rng, zero=self.gnn.zero_init_head)
        return params

    # ── Stages ─────────────────────────────────────────────────────

    def encode(self, grid_inputs: Tensor, p: Bound) -> tuple[Tensor, Tensor]:
        """(mesh latents [V x L], grid latents [n_grid x L])."""
        g2m = self.graphs.grid2mesh
        if grid_inputs.shape != (self.grid.n_nodes, self.d_in):
            raise DimensionError(
                f"grid inputs must be [{self.grid.n_nodes} x {self.d_in}], got {grid_inputs.shape}"
            )
        if np.any(g2m.receiver_degree() == 0):
            raise ConstructionError("grid2mesh graph leaves mesh nodes without incoming edges")
        grid_latent = mlp(grid_inputs, p, "grid_embed")
        mesh_latent = mlp(Tensor(self.graphs.mesh_static), p, "mesh_embed")
        edges = mlp(Tensor(g2m.features), p, "g2m_edge_embed")
        _, mesh_latent = _round(edges, grid_latent, mesh_latent, g2m.senders, g2m.receivers, p, "encoder")
        grid_latent = ops.add(grid_latent, mlp(grid_latent, p, "encoder.grid"))
        return mesh_latent, grid_latent

    def process(self, mesh_latent: Tensor, p: Bound) -> Tensor:
        mesh = self.graphs.mesh
        if self.gnn.processor_layers == 0:
            return mesh_latent
        edges = mlp(Tensor(self.graphs.mesh_edge_features), p, "mesh_edge_embed")
        for layer in range(self.gnn.processor_layers):
            edges, mesh_latent = _round(
                edges,
                mesh_latent,
                mesh_latent,
                mesh.senders,
                mesh.receivers,
                p,
                f"processor.{layer}",
                self.gnn.dropout,
                self.rng,
                self.training,
            )
        return mesh_latent

    def decode(self, mesh_latent: Tensor, grid_latent: Tensor, p: Bound) -> Tensor:
        """Normalized output maps [P x H x W]."""
        m2g = self.graphs.mesh2grid
        edges = mlp(Tensor(m2g.features), p, "m2g_edge_embed")
        _, grid_latent = _round(edges, mesh_latent, grid_latent, m2g.senders, m2g.receivers, p, "decoder")
        return nodes_to_maps(linear(grid_latent, p, "head"), self.grid.shape)

    def predict(self, window_z: np.ndarray, forcing_next_z: np.ndarray, p: Bound) -> Tensor:
        inputs = build_grid_inputs(window_z, forcing_next_z, self.spec, self.grid_static)
        mesh_latent, grid_latent = self.encode(inputs, p)
        return self.decode(self.process(mesh_latent, p), grid_latent, p)
