"""Combined-cycle power plant sensor records: load, synthesize, split, scale, bin.

A record is four ambient measurements (AT, V, AP, RH) plus the net hourly
electrical power output PE in MW. PE also determines the record's keyword
bin, the unit of search in the encrypted store.

All operations here are pure: datasets and scalers are immutable after
construction and safe to share across concurrent readers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateFeatureError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
    SizeError,
)

FEATURE_NAMES = ("AT", "V", "AP", "RH")
TARGET_NAME = "PE"

# Published per-feature statistics of the reference dataset
# (min, max, std); the synthetic generator is parameterized by these.
FEATURE_STATS = {
    "AT": (1.81, 37.11, 7.45),
    "V": (25.36, 81.56, 12.70),
    "AP": (992.89, 1033.30, 5.93),
    "RH": (25.56, 100.16, 14.6),
    "PE": (420.26, 495.76, 17.06),
}

PE_MIN = FEATURE_STATS["PE"][0]
PE_MAX = FEATURE_STATS["PE"][1]

# Gaussian noise added to the synthetic PE signal. This is the generator's
# noise floor: no regressor can beat it on held-out synthetic data.
SYNTH_NOISE_STD = 2.4


class BinCode(IntEnum):
    """Keyword bin for a power output value."""

    LOW = 0
    NORMAL = 1
    HIGH = 2
    SEVERE = 3

    @property
    def keyword(self) -> str:
        return KEYWORDS[self]


KEYWORDS = ("low", "normal", "high", "severe")

# Bin edges partition [PE_MIN, PE_MAX]; intervals are half-open with the
# lower bound inclusive, and the global maximum belongs to `severe`.
BIN_EDGES = (PE_MIN, 439.0, 458.0, 477.0, PE_MAX)


def bin_power(pe: float) -> BinCode:
    """Map a power value to its keyword bin.

    Values below the historical minimum clamp to `low` and above the
    maximum to `severe`, so slightly out-of-range streamed points remain
    searchable.
    """
    if not math.isfinite(pe):
        raise ArgumentError(f"pe must be finite, got {pe!r}")
    if pe < BIN_EDGES[1]:
        return BinCode.LOW
    if pe < BIN_EDGES[2]:
        return BinCode.NORMAL
    if pe < BIN_EDGES[3]:
        return BinCode.HIGH
    return BinCode.SEVERE


@dataclass(frozen=True)
class SensorRecord:
    """One observation: ordinal id, four ambient features, power output."""

    id: int
    at: float
    v: float
    ap: float
    rh: float
    pe: float

    def __post_init__(self):
        for name in ("at", "v", "ap", "rh", "pe"):
            if not math.isfinite(getattr(self, name)):
                raise ArgumentError(f"record {self.id}: {name} is not finite")

    def features(self) -> np.ndarray:
        return np.array([self.at, self.v, self.ap, self.rh], dtype=np.float64)

    @property
    def bin(self) -> BinCode:
        return bin_power(self.pe)


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of records plus provenance ('file' or 'synthetic(seed=N)')."""

    records: tuple[SensorRecord, ...]
    provenance: str

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ArgumentError("record ids must be unique within a dataset")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> SensorRecord:
        return self.records[i]

    def features(self) -> np.ndarray:
        """(n, 4) float64 matrix in AT, V, AP, RH column order."""
        if not self.records:
            return np.empty((0, 4), dtype=np.float64)
        return np.array([(r.at, r.v, r.ap, r.rh) for r in self.records], dtype=np.float64)

    def targets(self) -> np.ndarray:
        return np.array([r.pe for r in self.records], dtype=np.float64)

    def ids(self) -> np.ndarray:
        return np.array([r.id for r in self.records], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.provenance)


def _detect_delimiter(header_line: str) -> str:
    # Comma or semicolon, whichever the header actually uses.
    return ";" if header_line.count(";") >= header_line.count(",") else ","


def load_ccpp(path: str | Path) -> Dataset:
    """Load a delimited text file with (case-insensitive) columns AT, V, AP, RH, PE.

    Column order is free; delimiter is auto-detected between comma and
    semicolon. Ids are assigned 0..n-1 in file order.
    """
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise EmptyDatasetError(f"{path}: file has no header row")
    delim = _detect_delimiter(lines[0])
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = [h.strip().upper() for h in next(reader)]
    wanted = FEATURE_NAMES + (TARGET_NAME,)
    col = {}
    for name in wanted:
        if name not in header:
            raise SchemaError(f"{path}: missing required column {name}")
        col[name] = header.index(name)

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        values = {}
        for name in wanted:
            cell = row[col[name]].strip() if col[name] < len(row) else ""
            try:
                values[name] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {line_no}: column {name} is not numeric: {cell!r}"
                ) from None
        records.append(
            SensorRecord(
                id=len(records),
                at=values["AT"],
                v=values["V"],
                ap=values["AP"],
                rh=values["RH"],
                pe=values["PE"],
            )
        )
    if not records:
        raise EmptyDatasetError(f"{path}: no data rows")
    return Dataset(tuple(records), provenance="file")


def write_ccpp(dataset: Dataset, path: str | Path) -> None:
    """Export a dataset in the same delimited format load_ccpp reads."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_NAMES + (TARGET_NAME,))
        for r in dataset.records:
            writer.writerow([repr(r.at), repr(r.v), repr(r.ap), repr(r.rh), repr(r.pe)])


def synth_ccpp(n: int, seed: int) -> Dataset:
    """Generate a synthetic stand-in for the reference dataset.

    Features are drawn per column from a normal centered at (min+max)/2
    with the published std, then clipped to the published min/max. PE is a
    fixed smooth response so regression is learnable:

        pe = 458.0 - 1.70*(at - c_at) - 0.25*(v - c_v) + 0.07*(ap - c_ap)
             - 0.12*(rh - c_rh) + 0.012*(at - c_at)*(v - c_v) + noise

    where c_* are the column centers and noise ~ N(0, SYNTH_NOISE_STD^2);
    pe is clipped to the published PE range. Deterministic given (n, seed).
    """
    if n < 1:
        raise EmptyDatasetError("synthetic dataset needs n >= 1")
    rng = np.random.default_rng(seed)
    cols = {}
    for name in FEATURE_NAMES:
        lo, hi, std = FEATURE_STATS[name]
        center = (lo + hi) / 2.0
        cols[name] = np.clip(rng.normal(center, std, size=n), lo, hi)
    c_at = (FEATURE_STATS["AT"][0] + FEATURE_STATS["AT"][1]) / 2.0
    c_v = (FEATURE_STATS["V"][0] + FEATURE_STATS["V"][1]) / 2.0
    c_ap = (FEATURE_STATS["AP"][0] + FEATURE_STATS["AP"][1]) / 2.0
    c_rh = (FEATURE_STATS["RH"][0] + FEATURE_STATS["RH"][1]) / 2.0
    at, v, ap, rh = cols["AT"], cols["V"], cols["AP"], cols["RH"]
    signal = (
        458.0
        - 1.70 * (at - c_at)
        - 0.25 * (v - c_v)
        + 0.07 * (ap - c_ap)
        - 0.12 * (rh - c_rh)
        + 0.012 * (at - c_at) * (v - c_v)
    )
    pe = np.clip(signal + rng.normal(0.0, SYNTH_NOISE_STD, size=n), PE_MIN, PE_MAX)
    records = tuple(
        SensorRecord(id=i, at=float(at[i]), v=float(v[i]), ap=float(ap[i]),
                     rh=float(rh[i]), pe=float(pe[i]))
        for i in range(n)
    )
    return Dataset(records, provenance=f"synthetic(seed={seed})")


def split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint/exhaustive split; first floor(fraction*n) of a seeded
    permutation go to train. Deterministic given (dataset, fraction, seed)."""
    if not (0.0 < train_fraction < 1.0):
        raise ArgumentError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(d) == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(d))
    # +1e-9 snaps products like 0.9*n that should be exact integers.
    n_train = int(math.floor(train_fraction * len(d) + 1e-9))
    return d.subset(perm[:n_train]), d.subset(perm[n_train:])


def subsplit_test(test: Dataset, shap_ref_size: int = 450) -> tuple[Dataset, Dataset]:
    """Carve the valuation reference subset off the front of the test split."""
    if len(test) <= shap_ref_size:
        raise SizeError(
            f"test split has {len(test)} records but the valuation reference "
            f"subset needs {shap_ref_size} plus a non-empty remainder; lower "
            f"shap_ref_size in the config"
        )
    idx = range(len(test))
    return test.subset(idx[:shap_ref_size]), test.subset(idx[shap_ref_size:])


@dataclass(frozen=True)
class Scaler:
    """Per-feature z-score standardizer fit on training data only."""

    mean: np.ndarray  # (4,)
    std: np.ndarray   # (4,) all strictly positive

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.mean.shape[0]:
            raise ArgumentError(
                f"expected {self.mean.shape[0]} features, got {X.shape[1]}"
            )
        return (X - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def fit_scaler(train: Dataset | np.ndarray) -> Scaler:
    """Fit the z-score scaler. Population (ddof=0) std; constant features
    are rejected. Fit on the training split only, never on test data."""
    X = train.features() if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on an empty dataset")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    for i, s in enumerate(std):
        if s <= 0.0:
            name = FEATURE_NAMES[i] if i < len(FEATURE_NAMES) else str(i)
            raise DegenerateFeatureError(f"feature {name} is constant; cannot scale")
    return Scaler(mean=mean, std=std)


def apply_scaler(s: Scaler, d: Dataset | np.ndarray) -> np.ndarray:
    """Standardize a dataset (or raw feature matrix) with a fitted scaler."""
    X = d.features() if isinstance(d, Dataset) else d
    return s.transform(X)
