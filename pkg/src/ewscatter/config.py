"""Flat ``key = value`` experiment configuration with typed validation.

Lines starting with ``#`` are comments. Tuples are comma-separated. Floats
are written with ``repr`` so that a parse/serialize cycle is lossless.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .greens import LameParameters
from .inversion import M_MAX, M_MIN
from .lippmann import ORDER_TAGS, check_resolution
from .randfield import Grid3, RandomFieldSpec, bump_strength


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    lam: float = 2.0
    mu: float = 1.0
    grid_side: float = 2.0
    grid_n: int = 64
    bump_center: tuple = (0.0, 0.0, 0.0)
    bump_radius: float = 0.5
    bump_amplitude: float = 1.0
    m: float = 3.0
    seed: int = 0
    Q: float = 10.0
    doublings: int = 2
    nodes_per_band: int = 64
    taus: tuple = (0.0,)
    kind: str = "P"
    directions: int = 1
    realizations: int = 1
    tol: float = 1e-8
    max_iter: int = 300
    order_tags: tuple = ("born-1",)
    workers: int = 1
    output_dir: str = "runs/default"

    # -- derived objects -------------------------------------------------

    def lame(self) -> LameParameters:
        return LameParameters(self.lam, self.mu)

    def grid(self) -> Grid3:
        return Grid3.centered(self.grid_side, self.grid_n)

    def strength(self):
        return bump_strength(self.grid(), self.bump_center, self.bump_radius, self.bump_amplitude)

    def field_spec(self, realization: int = 0) -> RandomFieldSpec:
        return RandomFieldSpec(self.m, self.strength(), self.seed, realization)

    def omegas(self) -> np.ndarray:
        from .inversion import band_lattice

        return band_lattice(self.Q, max(self.taus), self.nodes_per_band, self.doublings)

    # -- validation ------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        try:
            lame = self.lame()
            grid = self.grid()
            self.strength()
            self.field_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not M_MIN < self.m <= M_MAX:
            raise ConfigError(f"m={self.m} outside (14/5, 3]")
        if self.Q <= 0 or self.doublings < 0 or self.nodes_per_band < 1:
            raise ConfigError("band requires Q > 0, doublings >= 0, nodes_per_band >= 1")
        if any(t < 0 for t in self.taus):
            raise ConfigError("taus must be nonnegative")
        step = self.Q / self.nodes_per_band
        for t in self.taus:
            if abs(t / step - round(t / step)) > 1e-6:
                raise ConfigError(f"tau={t} is not a multiple of the frequency step {step}")
        if self.kind not in ("P", "S"):
            raise ConfigError(f"kind must be P or S, got {self.kind!r}")
        if self.directions < 1 or self.realizations < 1 or self.workers < 1:
            raise ConfigError("directions, realizations and workers must be positive")
        if not 0 < self.tol < 1 or self.max_iter < 1:
            raise ConfigError("tol must lie in (0, 1) and max_iter must be positive")
        bad = [t for t in self.order_tags if t not in ORDER_TAGS]
        if bad:
            raise ConfigError(f"unknown order tags {bad}; choose from {ORDER_TAGS}")
        if set(self.order_tags) - {"born-1"}:
            try:
                check_resolution(grid, float(self.omegas()[-1]), lame)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return self

    # -- text format -----------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = _parse(key, raw, hints[key], _default(cls, key))
        return cls(**values).validate()

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _default(cls, key):
    return next(f.default for f in fields(cls) if f.name == key)


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(key, raw, hint, default):
    try:
        if hint is tuple or isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if default and isinstance(default[0], str):
                return tuple(parts)
            return tuple(float(p) for p in parts)
        if hint is bool:
            return raw.lower() in ("1", "true", "yes")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc
