"""The four forecasting architectures and their parameter-count parity.

Every model maps a batch of lag windows ``(B, L, F, C)`` — L daily lags of an
F-feature x C-city grid — to one prediction per target city ``(B, n)``.

* ``unistream``: one ConvLSTM over all L lags, batch norm, flatten, two
  ReLU dense layers, linear head.
* ``multistream``: the lags are split across two streams (older half, newer
  half), each runs two stacked ConvLSTMs; the stream outputs are concatenated
  on the channel axis, then batch norm, flatten, one ReLU dense layer, linear
  head.
* ``att_*``: same, with a self-attention encoder block inserted right after
  the (merged) ConvLSTM output, operating on one token per city.

Default dense widths differ per variant so that all four land within a few
percent of the same learnable-parameter count (the encoder block is worth
~2.66M parameters at the default grid, which the first dense layer absorbs).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError
from .layers import BatchNorm, ConvLSTM, Dense, EncoderBlock, Layer
from .serialize import load_arrays, save_arrays

VARIANTS = ("unistream", "att_unistream", "multistream", "att_multistream")

_DEFAULT_FILTERS = {
    "unistream": 32,
    "att_unistream": 32,
    "multistream": 16,
    "att_multistream": 16,
}

# Tuned so the four defaults sit within ~1% of each other (~5.4M parameters):
# the non-att variants spend the encoder block's budget on a wider first
# dense layer instead.
_DEFAULT_DENSE = {
    "unistream": (512, 128),
    "att_unistream": (256, 128),
    "multistream": (512,),
    "att_multistream": (256,),
}


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults give the full-size 18x18 setup."""

    variant: str = "unistream"
    lags: int = 10
    features: int = 18
    cities: int = 18
    n_targets: int = 6
    streams: Optional[int] = None
    filters: Optional[int] = None
    kernel: tuple[int, int] = (3, 3)
    dense: Optional[tuple[int, ...]] = None
    key_dim: Optional[int] = None
    ff_dim: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if self.streams is None:
            self.streams = 2 if self.multistream else 1
        if self.filters is None:
            self.filters = _DEFAULT_FILTERS[self.variant]
        if self.dense is None:
            self.dense = _DEFAULT_DENSE[self.variant]
        self.dense = tuple(int(d) for d in self.dense)
        self.kernel = (int(self.kernel[0]), int(self.kernel[1]))
        if self.multistream:
            if self.streams < 2:
                raise ConfigurationError(
                    f"multistream needs at least 2 streams, got {self.streams}"
                )
        elif self.streams != 1:
            raise ConfigurationError(
                f"unistream variants use 1 stream, got {self.streams}"
            )
        if self.lags % self.streams != 0:
            raise ConfigurationError(
                f"streams must evenly divide the lags: "
                f"{self.streams} does not divide {self.lags}"
            )
        if self.n_targets > self.cities:
            raise ConfigurationError(
                f"cannot target {self.n_targets} of {self.cities} cities"
            )
        for name in ("lags", "features", "cities", "n_targets", "filters"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def multistream(self) -> bool:
        return self.variant in ("multistream", "att_multistream")

    @property
    def attention(self) -> bool:
        return self.variant.startswith("att_")

    @property
    def lags_per_stream(self) -> int:
        return self.lags // self.streams

    @property
    def merged_channels(self) -> int:
        """Channel count of the map entering batch norm / attention."""
        return self.filters * self.streams

    @property
    def embed_dim(self) -> int:
        """Embedding width of one city token: channels x features."""
        return self.merged_channels * self.features

    def to_text(self) -> str:
        lines = [
            f"variant = {self.variant}",
            f"lags = {self.lags}",
            f"features = {self.features}",
            f"cities = {self.cities}",
            f"n_targets = {self.n_targets}",
            f"streams = {self.streams}",
            f"filters = {self.filters}",
            f"kernel = {self.kernel[0]} {self.kernel[1]}",
            "dense = " + " ".join(str(d) for d in self.dense),
            f"seed = {self.seed}",
        ]
        if self.key_dim is not None:
            lines.append(f"key_dim = {self.key_dim}")
        if self.ff_dim is not None:
            lines.append(f"ff_dim = {self.ff_dim}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["ModelConfig", dict[str, str]]:
        """Parse a config block; unrecognized keys come back as extras."""
        known: dict[str, str] = {}
        extras: dict[str, str] = {}
        for raw in io.StringIO(text):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"malformed config line: {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            target = known if key in cls._FIELD_PARSERS else extras
            if key in target:
                raise ConfigurationError(f"duplicate config key {key!r}")
            target[key] = value
        kwargs = {k: cls._FIELD_PARSERS[k](v) for k, v in known.items()}
        return cls(**kwargs), extras

    _FIELD_PARSERS = {
        "variant": str,
        "lags": int,
        "features": int,
        "cities": int,
        "n_targets": int,
        "streams": int,
        "filters": int,
        "kernel": lambda v: tuple(int(p) for p in v.split()),
        "dense": lambda v: tuple(int(p) for p in v.split()),
        "key_dim": int,
        "ff_dim": int,
        "seed": int,
    }


class ModelGraph(Layer):
    """One assembled architecture: layers, config, forward, parameter count."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        kernel = cfg.kernel
        if cfg.multistream:
            self.streams = [
                [
                    ConvLSTM(rng, 1, cfg.filters, kernel, return_sequence=True),
                    ConvLSTM(rng, cfg.filters, cfg.filters, kernel),
                ]
                for _ in range(cfg.streams)
            ]
        else:
            self.backbone = ConvLSTM(rng, 1, cfg.filters, kernel)
        if cfg.attention:
            self.encoder = EncoderBlock(
                rng, cfg.embed_dim, cfg.key_dim, cfg.ff_dim
            )
        self.norm = BatchNorm(cfg.merged_channels)
        head: list[Dense] = []
        width = cfg.merged_channels * cfg.features * cfg.cities
        for out_width in cfg.dense:
            head.append(Dense(rng, width, out_width, activation="relu"))
            width = out_width
        head.append(Dense(rng, width, cfg.n_targets))
        self.head = head

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Layer)):
                yield name, value
            elif isinstance(value, list):
                for i, v in enumerate(value):
                    if isinstance(v, Layer):
                        yield f"{name}{i}", v
                    else:  # a stream: list of its two ConvLSTM layers
                        for j, layer in enumerate(v):
                            yield f"{name}{i}.conv{j}", layer

    def _convolve(self, batch: Tensor) -> Tensor:
        """Run the recurrent front end; returns the merged (B, ch, F, C) map."""
        cfg = self.cfg
        nb = batch.shape[0]
        if cfg.multistream:
            v = cfg.lags_per_stream
            outputs = []
            for i, (first, second) in enumerate(self.streams):
                lag_slice = batch[:, i * v : (i + 1) * v]
                sequence = ad.reshape(
                    lag_slice, (nb, v, 1, cfg.features, cfg.cities)
                )
                outputs.append(second(first(sequence)))
            return ad.concat(outputs, axis=1)
        sequence = ad.reshape(batch, (nb, cfg.lags, 1, cfg.features, cfg.cities))
        return self.backbone(sequence)

    def _attend(self, grid: Tensor) -> Tensor:
        """Encoder block over city tokens: (B, ch, F, C) -> same shape."""
        nb, ch, nf, nc = grid.shape
        tokens = ad.reshape(ad.transpose(grid, (0, 3, 1, 2)), (nb, nc, ch * nf))
        attended = self.encoder(tokens)
        return ad.transpose(
            ad.reshape(attended, (nb, nc, ch, nf)), (0, 2, 3, 1)
        )

    def forward(self, batch, mode: str = "infer") -> Tensor:
        if mode not in ("train", "infer"):
            raise ConfigurationError(f"mode must be train or infer, got {mode!r}")
        batch = ad.as_tensor(batch)
        cfg = self.cfg
        expected = (cfg.lags, cfg.features, cfg.cities)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise DimensionError(
                f"expected batch of shape (B, {cfg.lags}, {cfg.features}, "
                f"{cfg.cities}), got {batch.shape}"
            )
        grid = self._convolve(batch)
        if cfg.attention:
            grid = self._attend(grid)
        grid = self.norm(grid, training=mode == "train")
        x = ad.reshape(grid, (batch.shape[0], -1))
        for layer in self.head:
            x = layer(x)
        return x

    def __call__(self, batch, mode: str = "infer") -> Tensor:
        return self.forward(batch, mode)


def build_model(cfg: ModelConfig) -> ModelGraph:
    return ModelGraph(cfg)


def count_params(model: ModelGraph) -> int:
    return model.count_params()


def save_checkpoint(model: ModelGraph, path, extras: Optional[dict] = None):
    """Write parameters + running stats with a self-describing config block."""
    meta = model.cfg.to_text()
    for key, value in (extras or {}).items():
        meta += f"{key} = {value}\n"
    save_arrays(path, dict(model.named_state()), meta)


def load_checkpoint(path) -> tuple[ModelGraph, dict[str, str]]:
    """Rebuild a model from a checkpoint; returns it plus the extra meta."""
    arrays, meta = load_arrays(path)
    cfg, extras = ModelConfig.from_text(meta)
    model = ModelGraph(cfg)
    model.load_state(arrays)
    return model, extras
