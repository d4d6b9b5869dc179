"""
Convolutional encoder, LSTM over the context, convolutional decoder.

Each context frame (all channels, drivers and forcings as image
channels) is encoded by a stack of circular convolutions; the last
``downsample_layers`` use stride 2. Global mean pooling and a linear
layer give the latent vector fed to the LSTM. The decoder projects the
final hidden state back to the coarsest feature map and climbs back up
through bilinear upsampling and transposed convolutions. The forcings of
the prediction time and the static maps are appended before the output
layer.
"""
from __future__ import annotations

import numpy as np

from ioncast.config import ModelConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer
from ioncast.errors import ConfigError
from ioncast.logging_config import get_logger
from ioncast.mesh.grid import LatLonGrid
from ioncast.models.base import Forecaster
from ioncast.models.layers import Bound, Params, channel_bias, init_conv, init_linear, linear
from ioncast.tensor import Tensor, conv2d_circular, conv2d_transposed, default_dtype, ops, upsample_bilinear
from ioncast.tensor.ops import LstmCellParams, lstm_cell

logger = get_logger(__name__)

GRID_STATIC_MAPS = 4


class LstmForecaster(Forecaster):
    architecture = "lstm"

    def __init__(
        self,
        spec: ChannelSpec,
        grid: LatLonGrid,
        normalizer: Normalizer,
        config: ModelConfig,
        params: Params | None = None,
        seed: int = 0,
    ) -> None:
        self.lstm = config.lstm
        d = config.lstm.downsample_layers
        if min(grid.shape) < 2**d:
            raise ConfigError(
                f"grid {grid.shape[0]}x{grid.shape[1]} is too small for {d} stride-2 layers "
                f"(needs at least {2**d} cells per side)",
                key="model.lstm.downsample_layers",
            )
        self.strides = [1] * (config.lstm.encoder_layers - d) + [2] * d
        self.widths = self._widths()
        self.sizes = self._sizes(grid.shape)
        static = grid.static_features().T.reshape(GRID_STATIC_MAPS, *grid.shape)
        self.static_maps = np.ascontiguousarray(static)
        super().__init__(spec, grid, normalizer, config, params, seed)
        logger.debug("lstm_built", widths=self.widths, sizes=self.sizes, parameters=self.parameter_count())

    def _widths(self) -> list[int]:
        widths = []
        downsampled = 0
        for stride in self.strides:
            downsampled += stride == 2
            widths.append(min(self.lstm.base_channels * 2**downsampled, self.lstm.max_channels))
        return widths

    @staticmethod
    def _conv_size(size: int, stride: int) -> int:
        return -(-size // stride)

    def _sizes(self, shape: tuple[int, int]) -> list[tuple[int, int]]:
        """Spatial size after every encoder layer, input size first."""
        sizes = [shape]
        for stride in self.strides:
            h, w = sizes[-1]
            sizes.append((self._conv_size(h, stride), self._conv_size(w, stride)))
        return sizes

    def init_params(self, rng: np.random.Generator) -> Params:
        cfg = self.lstm
        k = cfg.kernel_size
        n_channels = len(self.spec.names)
        params: Params = {}
        c_in = n_channels
        for i, width in enumerate(self.widths):
            init_conv(params, f"encoder.{i}", width, c_in, k, rng)
            c_in = width
        init_linear(params, "encoder.project", c_in, cfg.latent_dim, rng)

        latent = cfg.latent_dim
        dtype = default_dtype()
        params["lstm.w_x"] = (rng.standard_normal((latent, 4 * latent)) / np.sqrt(latent)).astype(dtype)
        params["lstm.w_h"] = (rng.standard_normal((latent, 4 * latent)) / np.sqrt(latent)).astype(dtype)
        params["lstm.bias"] = np.zeros(4 * latent, dtype=dtype)

        h0, w0 = self.sizes[-1]
        init_linear(params, "decoder.project", latent, self.widths[-1] * h0 * w0, rng)
        # transposed stages mirror the encoder, coarse to fine
        c_in = self.widths[-1]
        for j, i in enumerate(reversed(range(len(self.widths)))):
            c_out = self.widths[i - 1] if i > 0 else self.lstm.base_channels
            init_conv(params, f"decoder.{j}", c_out, c_in, k, rng, transposed=True)
            c_in = c_out
        conditioning = len(self.forcing) + len(self.coordinate) + GRID_STATIC_MAPS
        init_conv(
            params,
            "head",
            len(self.predicted),
            c_in + conditioning,
            k,
            rng,
            zero=self.lstm.zero_init_head,
            transposed=True,
        )
        return params

    # ── Stages ─────────────────────────────────────────────────────

    def encode_frame(self, frame_z: np.ndarray | Tensor, p: Bound) -> Tensor:
        """Latent vector [latent_dim] of one normalized frame [C x H x W]."""
        x = frame_z if isinstance(frame_z, Tensor) else Tensor(frame_z)
        for i, stride in enumerate(self.strides):
            x = conv2d_circular(x, p[f"encoder.{i}.k"], stride=stride)
            x = ops.swish(channel_bias(x, p[f"encoder.{i}.b"]))
        pooled = ops.mean(x, axis=(1, 2))
        latent = linear(ops.reshape(pooled, (1, pooled.shape[0])), p, "encoder.project")
        return ops.reshape(latent, (self.lstm.latent_dim,))

    def cell_params(self, p: Bound) -> LstmCellParams:
        return LstmCellParams(w_x=p["lstm.w_x"], w_h=p["lstm.w_h"], bias=p["lstm.bias"])

    def sequence_step(self, latent: Tensor, h: Tensor, c: Tensor, p: Bound) -> tuple[Tensor, Tensor]:
        return lstm_cell(latent, h, c, self.cell_params(p))

    def decode_latent(self, h: Tensor, forcing_next_z: np.ndarray, last_z: np.ndarray, p: Bound) -> Tensor:
        """Normalized output maps [P x H x W] from the final hidden state."""
        h0, w0 = self.sizes[-1]
        x = linear(ops.reshape(h, (1, self.lstm.latent_dim)), p, "decoder.project")
        x = ops.swish(ops.reshape(x, (self.widths[-1], h0, w0)))
        for j, i in enumerate(reversed(range(len(self.strides)))):
            if self.strides[i] == 2:
                target_h, target_w = self.sizes[i]
                x = upsample_bilinear(x, 2)
                x = ops.slice_axis(ops.slice_axis(x, 1, 0, target_h), 2, 0, target_w)
            x = conv2d_transposed(x, p[f"decoder.{j}.k"], stride=1)
            x = ops.swish(channel_bias(x, p[f"decoder.{j}.b"]))
        conditioning = np.concatenate([forcing_next_z, last_z[self.coordinate], self.static_maps], axis=0)
        x = ops.concat([x, Tensor(conditioning)], axis=0)
        return channel_bias(conv2d_transposed(x, p["head.k"], stride=1), p["head.b"])

    def predict(self, window_z: np.ndarray, forcing_next_z: np.ndarray, p: Bound) -> Tensor:
        latent = self.lstm.latent_dim
        h = Tensor(np.zeros(latent))
        c = Tensor(np.zeros(latent))
        for frame in window_z:
            x = ops.dropout(self.encode_frame(frame, p), self.lstm.dropout, self.rng, self.training)
            h, c = self.sequence_step(x, h, c, p)
        return self.decode_latent(h, forcing_next_z, window_z[-1], p)
