"""Dataset cubes: on-disk format, imputation, min-max scaling, flattening,
and a labeled synthetic generator.

On disk a dataset is a directory holding ``header.json`` and ``data.bin``::

    {"T": 365, "L": 41, "W": 41, "n": 7, "variables": [...],
     "dtype": "f32", "layout": "T,L,W,n", "byte_order": "little"}

``data.bin`` is exactly ``4*T*L*W*n`` bytes of little-endian float32 in
row-major ``(T, L, W, n)`` order. Missing values are stored as quiet NaN.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

HEADER = "header.json"
DATA = "data.bin"


@dataclass
class DatasetCube:
    values: np.ndarray
    variable_names: list[str]
    missing_mask: np.ndarray | None = None
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None

    def __post_init__(self):
        if self.values.ndim != 4:
            raise DataError(f"cube must be (T, L, W, n), got {self.values.shape}")
        if len(self.variable_names) != self.values.shape[3]:
            raise DataError("one variable name per channel required")
        if self.missing_mask is None:
            self.missing_mask = np.isnan(self.values)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def normalized(self) -> bool:
        return self.mins is not None


@dataclass
class SyntheticSpec:
    k_regimes: int = 3
    T: int = 120
    L: int = 16
    W: int = 16
    n: int = 3
    separation: float = 1.0
    noise_sigma: float = 0.05
    seed: int = 0
    variable_names: list[str] = field(default_factory=list)


def save_dataset(cube: DatasetCube, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t, lon, lat, n = cube.shape
    header = {"T": t, "L": lon, "W": lat, "n": n, "variables": list(cube.variable_names),
              "dtype": "f32", "layout": "T,L,W,n", "byte_order": "little"}
    (directory / HEADER).write_text(json.dumps(header, indent=2) + "\n")
    values = np.where(cube.missing_mask, np.float32(np.nan), cube.values)
    (directory / DATA).write_bytes(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_dataset(directory) -> DatasetCube:
    directory = Path(directory)
    try:
        header = json.loads((directory / HEADER).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{directory} has no {HEADER}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{directory / HEADER}: {exc}") from exc
    if header.get("dtype") != "f32":
        raise FormatError(f"unsupported dtype {header.get('dtype')!r}")
    if header.get("layout", "T,L,W,n") != "T,L,W,n" or header.get("byte_order", "little") != "little":
        raise FormatError("only little-endian T,L,W,n layout is supported")
    try:
        shape = tuple(int(header[key]) for key in ("T", "L", "W", "n"))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"header missing dimension: {exc}") from exc
    raw = (directory / DATA).read_bytes()
    if len(raw) != 4 * math.prod(shape):
        raise FormatError(f"{DATA} has {len(raw)} bytes, header implies {4 * math.prod(shape)}")
    values = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    names = header.get("variables") or [f"var{i}" for i in range(shape[3])]
    return DatasetCube(values, list(names))


def impute_missing(cube: DatasetCube, mode: str = "variable") -> DatasetCube:
    """Fill missing entries with the mean of observed values.

    ``mode="variable"`` uses each variable's own mean; ``mode="global"`` uses
    one mean over every observed entry of the cube.
    """
    mask = cube.missing_mask
    if not mask.any():
        return cube
    values = cube.values.copy()
    observed = ~mask
    if mode == "global":
        if not observed.any():
            raise DataError("dataset has no observed values")
        values[mask] = values[observed].astype(np.float64).mean()
    elif mode == "variable":
        for v in range(values.shape[3]):
            obs = observed[..., v]
            if not obs.any():
                raise DataError(f"variable {cube.variable_names[v]!r} is entirely missing")
            chan = values[..., v]
            chan[~obs] = chan[obs].astype(np.float64).mean()
    else:
        raise ValueError(f"unknown imputation mode {mode!r}")
    return replace(cube, values=values, missing_mask=mask.copy())


def minmax_normalize(cube: DatasetCube) -> DatasetCube:
    """Rescale each variable to [0, 1] over all times and locations."""
    values = cube.values.astype(np.float64)
    if np.isnan(values).any():
        raise DataError("impute missing values before normalizing")
    mins = values.min(axis=(0, 1, 2))
    maxs = values.max(axis=(0, 1, 2))
    span = maxs - mins
    out = np.zeros_like(values)
    for v in range(values.shape[3]):
        if span[v] == 0:
            warnings.warn(f"variable {cube.variable_names[v]!r} is constant; mapped to 0",
                          RuntimeWarning, stacklevel=2)
        else:
            out[..., v] = (values[..., v] - mins[v]) / span[v]
    return replace(cube, values=out.astype(np.float32), mins=mins, maxs=maxs)


def denormalize(cube: DatasetCube) -> np.ndarray:
    if not cube.normalized:
        raise DataError("cube carries no normalization constants")
    return cube.values.astype(np.float64) * (cube.maxs - cube.mins) + cube.mins


def preprocess(cube: DatasetCube, impute_mode: str = "variable") -> DatasetCube:
    return minmax_normalize(impute_missing(cube, impute_mode))


def flatten(cube: DatasetCube | np.ndarray) -> np.ndarray:
    """One row per timestep: ``(T, L*W*n)``."""
    values = cube.values if isinstance(cube, DatasetCube) else np.asarray(cube)
    return values.reshape(values.shape[0], -1)


def unflatten(flat: np.ndarray, dims) -> np.ndarray:
    return np.asarray(flat).reshape((len(flat),) + tuple(dims))


def regime_labels(t: int, k: int) -> np.ndarray:
    """Contiguous, near-equal blocks; every one of the ``k`` regimes is used."""
    return (np.arange(t) * k) // t


def generate_synthetic(spec: SyntheticSpec) -> tuple[DatasetCube, np.ndarray]:
    """Regime-switching fields: each (regime, variable) gets two Gaussian bumps
    with their own centers and amplitudes; each timestep is its regime's field
    plus white noise."""
    if not 1 <= spec.k_regimes < spec.T:
        raise DataError("need 1 <= k_regimes < T")
    if spec.separation <= 0 or spec.noise_sigma < 0:
        raise DataError("separation must be positive and noise_sigma non-negative")
    rng = np.random.default_rng(spec.seed)
    yy, xx = np.meshgrid(np.arange(spec.L), np.arange(spec.W), indexing="ij")
    width = max(spec.L, spec.W) / 4.0
    patterns = np.zeros((spec.k_regimes, spec.L, spec.W, spec.n))
    for r in range(spec.k_regimes):
        for v in range(spec.n):
            for _ in range(2):
                cy = rng.uniform(0, spec.L - 1)
                cx = rng.uniform(0, spec.W - 1)
                amp = spec.separation * rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
                patterns[r, :, :, v] += amp * np.exp(
                    -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
    truth = regime_labels(spec.T, spec.k_regimes)
    values = patterns[truth] + spec.noise_sigma * rng.standard_normal(
        (spec.T, spec.L, spec.W, spec.n))
    names = spec.variable_names or [f"var{i}" for i in range(spec.n)]
    return DatasetCube(values.astype(np.float32), list(names)), truth
