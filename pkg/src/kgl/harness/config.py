"""Key/value experiment configuration and the geometry it describes.

Format: one ``key = value`` per line, ``#`` starts a comment.  Geometry keys:

    dim_m        = 2
    metric.kind  = radial | grid2d
    metric.fm    = euclidean | hyperbolic | hyperbolic(K0) | table(path)
    rho          = <number> | constant(c) | decaying(c, psi) | quadratic(c, a) | table(path)
    k0           = <number>            (optional curvature bound)

grid2d geometries also read ``mesh.radius``, ``mesh.n_r``, ``mesh.n_theta`` and
an optional ``rho.angular = a`` that multiplies rho by 1 + a r^2/(1 + r^2) cos(theta).
Everything else (H, alpha, beta, C, radii, boundary, ...) is read by the experiments.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from ..errors import ConfigError, InvalidGeometryError
from ..geometry import (
    ConstantRho,
    EuclideanProfile,
    HyperbolicProfile,
    DecayingRho,
    PolarGrid2D,
    QuadraticRho,
    TableProfile,
    WarpedProduct,
)
from ..mesh import PolarMesh

_CALL = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*(?:\((.*)\))?\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class Config:
    values: Mapping[str, str]
    base_dir: Path = field(default_factory=Path.cwd)

    # --- typed access -------------------------------------------------
    def has(self, key):
        return key in self.values

    def raw(self, key, default=None):
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing configuration key {key!r}")
        return default

    def get_float(self, key, default=None):
        v = self.raw(key, None if default is None else str(default))
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {v!r}") from None

    def get_int(self, key, default=None):
        v = self.raw(key, None if default is None else str(default))
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {v!r}") from None

    def get_floats(self, key, default=None):
        v = self.raw(key, None if default is None else ", ".join(str(x) for x in default))
        try:
            return [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key}: expected a list of numbers, got {v!r}") from None

    def get_str(self, key, default=None):
        return self.raw(key, default).strip()

    def get_bool(self, key, default=False):
        v = self.raw(key, "true" if default else "false").strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {v!r}")

    def with_values(self, **overrides):
        merged = dict(self.values)
        merged.update({k.replace("__", "."): str(v) for k, v in overrides.items()})
        return Config(merged, self.base_dir)

    # --- identity ----------------------------------------------------
    def canonical_text(self):
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_config(text, base_dir=None) -> Config:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key or not val:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return Config(values, Path(base_dir) if base_dir else Path.cwd())


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def config_from_dict(values: Mapping, base_dir=None) -> Config:
    return Config({str(k): str(v) for k, v in values.items()}, Path(base_dir) if base_dir else Path.cwd())


def _call(spec, key):
    m = _CALL.match(spec)
    if not m:
        raise ConfigError(f"{key}: cannot parse {spec!r}")
    name = m.group(1).lower()
    args = [a.strip() for a in m.group(2).split(",")] if m.group(2) else []
    return name, args


def _table(args, cfg: Config, key):
    if len(args) != 1:
        raise ConfigError(f"{key}: table(path) takes one argument")
    path = Path(args[0])
    if not path.is_absolute():
        path = cfg.base_dir / path
    try:
        return TableProfile.from_file(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot read table {path}: {exc}") from None


def _floats(args, key, n):
    if len(args) != n:
        raise ConfigError(f"{key}: expected {n} numeric arguments, got {len(args)}")
    try:
        return [float(a) for a in args]
    except ValueError:
        raise ConfigError(f"{key}: non-numeric argument in {args}") from None


def metric_profile(cfg: Config):
    spec = cfg.get_str("metric.fm", "euclidean")
    name, args = _call(spec, "metric.fm")
    if name == "euclidean" and not args:
        return EuclideanProfile()
    if name == "hyperbolic":
        k0 = _floats(args, "metric.fm", 1)[0] if args else 1.0
        return HyperbolicProfile(k0)
    if name == "table":
        return _table(args, cfg, "metric.fm")
    raise ConfigError(f"metric.fm: unknown profile {spec!r}")


def rho_profile(cfg: Config):
    spec = cfg.get_str("rho", "1")
    try:
        return ConstantRho(float(spec))
    except ValueError:
        pass
    name, args = _call(spec, "rho")
    if name == "constant":
        return ConstantRho(_floats(args, "rho", 1)[0])
    if name == "decaying":
        if len(args) != 2:
            raise ConfigError("rho: decaying(c, psi) takes two arguments")
        return DecayingRho(_floats(args[:1], "rho", 1)[0], args[1])
    if name == "quadratic":
        return QuadraticRho(*_floats(args, "rho", 2))
    if name == "table":
        return _table(args, cfg, "rho")
    raise ConfigError(f"rho: unknown warping function {spec!r}")


def build_geometry(cfg: Config, radius: Optional[float] = None) -> WarpedProduct:
    """The WarpedProduct described by ``cfg``; grid2d meshes use ``radius`` if given."""
    try:
        dim = cfg.get_int("dim_m", 2)
        kind = cfg.get_str("metric.kind", "radial")
        fm = metric_profile(cfg)
        rho = rho_profile(cfg)
        k0 = cfg.get_float("k0") if cfg.has("k0") else None
        if k0 is None and isinstance(fm, EuclideanProfile):
            k0 = 0.0
        elif k0 is None and isinstance(fm, HyperbolicProfile):
            k0 = fm.k0
        if kind == "radial":
            return WarpedProduct(dim_m=dim, metric=fm, rho=rho, k0=k0, name=cfg.digest())
        if kind == "grid2d":
            mesh = PolarMesh(
                radius if radius is not None else cfg.get_float("mesh.radius"),
                cfg.get_int("mesh.n_r", 64),
                cfg.get_int("mesh.n_theta", 64),
            )
            amp = cfg.get_float("rho.angular", 0.0)
            if abs(amp) >= 1:
                raise ConfigError("rho.angular must lie in (-1, 1)")
            rho_nodes = mesh.sample(lambda r, t: rho(r) * (1.0 + amp * r**2 / (1.0 + r**2) * np.cos(t)))
            return WarpedProduct(dim_m=dim, metric=PolarGrid2D(fm, mesh), rho=rho_nodes, k0=k0, name=cfg.digest())
        raise ConfigError(f"metric.kind: expected radial or grid2d, got {kind!r}")
    except InvalidGeometryError as exc:
        raise ConfigError(f"invalid geometry: {exc}") from exc
