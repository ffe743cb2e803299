"""Flat ``key = value`` run configuration shared by every CLI command.

One RunConfig fully determines a training run; its canonical text form is
hashed to name the output directory, so identical configurations land in
identical places with identical artifacts.  Unknown keys are rejected rather
than ignored — a typo should fail loudly, not silently train the default.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Optional

from .data import TARGET_CITIES
from .errors import ConfigurationError


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _optional(parser):
    def parse(text: str):
        return None if text.lower() == "none" else parser(text)

    return parse


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in text.split(",") if p.strip())


def _parse_strs(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


_PARSERS = {
    "data": _optional(_parse_str),
    "lags": _parse_int,
    "horizon": _parse_int,
    "target_feature": _parse_str,
    "target_cities": _parse_strs,
    "split_ratio": _parse_float,
    "val_fraction": _parse_float,
    "variant": _parse_str,
    "filters": _optional(_parse_int),
    "kernel": _parse_ints,
    "dense": _optional(_parse_ints),
    "key_dim": _optional(_parse_int),
    "ff_dim": _optional(_parse_int),
    "streams": _optional(_parse_int),
    "lr": _parse_float,
    "batch_size": _parse_int,
    "max_epochs": _parse_int,
    "patience": _parse_int,
    "seed": _parse_int,
    "stop_train_mse": _optional(_parse_float),
    "mode": _parse_str,
    "patch_size": _parse_int,
    "fill": _parse_str,
    "occlude_city": _optional(_parse_str),
    "samples": _parse_int,
    "iterations": _parse_int,
    "ascent_lr": _parse_float,
    "scoremax_lags": _parse_ints,
    "sample_index": _parse_int,
    "out": _parse_str,
}


@dataclass
class RunConfig:
    """Every knob of the pipeline, with the reference defaults."""

    data: Optional[str] = None
    lags: int = 10
    horizon: int = 2
    target_feature: str = "avg_temp"
    target_cities: tuple[str, ...] = TARGET_CITIES
    split_ratio: float = 0.9
    val_fraction: float = 0.1
    variant: str = "unistream"
    filters: Optional[int] = None
    kernel: tuple[int, ...] = (3, 3)
    dense: Optional[tuple[int, ...]] = None
    key_dim: Optional[int] = None
    ff_dim: Optional[int] = None
    streams: Optional[int] = None
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    stop_train_mse: Optional[float] = None
    mode: str = "feature_row"
    patch_size: int = 1
    fill: str = "zero"
    occlude_city: Optional[str] = None
    samples: int = 32
    iterations: int = 100
    ascent_lr: float = 0.01
    scoremax_lags: tuple[int, ...] = (1, 5, 10)
    sample_index: int = 0
    out: str = "runs"

    def apply(self, assignments: dict[str, str], source: str) -> None:
        """Parse and set ``key -> raw text`` pairs; unknown keys are fatal."""
        for key, raw in assignments.items():
            parser = _PARSERS.get(key)
            if parser is None:
                raise ConfigurationError(
                    f"{source}: unknown config key {key!r}"
                )
            try:
                setattr(self, key, parser(raw))
            except (ValueError, TypeError):
                raise ConfigurationError(
                    f"{source}: bad value {raw!r} for key {key!r}"
                ) from None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        assignments: dict[str, str] = {}
        with open(path) as handle:
            for number, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"{path}:{number}: expected 'key = value', got {line!r}"
                    )
                key, _, value = line.partition("=")
                key = key.strip()
                if key in assignments:
                    raise ConfigurationError(
                        f"{path}:{number}: duplicate key {key!r}"
                    )
                assignments[key] = value.strip()
        cfg.apply(assignments, str(path))
        return cfg

    def _format(self, value) -> str:
        if value is None:
            return "none"
        if isinstance(value, tuple):
            return ",".join(str(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def to_text(self) -> str:
        """Canonical form: every field but the output root, sorted by name.

        The output root is a destination, not part of the experiment, so the
        same configuration written anywhere keeps the same digest (and the
        recorded config stays byte-identical across destinations).
        """
        lines = [
            f"{f.name} = {self._format(getattr(self, f.name))}"
            for f in sorted(fields(self), key=lambda f: f.name)
            if f.name != "out"
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]
