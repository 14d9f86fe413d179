"""Trip/charging data schema, CSV I/O, preprocessing, splitting and synthesis.

A :class:`Dataset` is stored column-wise (one numpy array per field) so the
numerical stages downstream can work on whole columns.  Every row carries a
``row_id`` (its 0-based position in the source file or generator output) that
survives subsetting; the pipeline uses it to audit which rows each fitting
stage consumed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "ChargeLevel",
    "TripRecord",
    "Dataset",
    "FeatureTransform",
    "TransformParams",
    "FeatureMatrix",
    "Segment",
    "LabelRule",
    "SynthConfig",
    "CSV_COLUMNS",
    "NUMERIC_FEATURES",
    "FORECAST_FEATURES",
    "CLUSTER_FEATURES",
    "load_csv",
    "write_csv",
    "split_dataset",
    "fit_transform",
    "apply_transform",
    "generate_synthetic",
]


class ChargeLevel(IntEnum):
    NONE = 0
    L1 = 1
    L2 = 2
    DCFAST = 3

    @classmethod
    def parse(cls, token: str) -> "ChargeLevel":
        token = token.strip()
        if token.isdigit():
            return cls(int(token))
        return cls[token.upper()]


DEST_NAMES = ("home", "work", "public", "other")

CSV_COLUMNS = (
    "vehicle_id",
    "departure_time",
    "arrival_time",
    "start_soc",
    "trip_distance",
    "dest_category",
    "cum_distance_since_charge",
    "label",
)

NUMERIC_FEATURES = (
    "departure_time",
    "arrival_time",
    "start_soc",
    "trip_distance",
    "cum_distance_since_charge",
    "dest_category",
)

# union of every trip characteristic the method is reported to use
FORECAST_FEATURES = NUMERIC_FEATURES
# start time, SOC start, distance, destination
CLUSTER_FEATURES = ("departure_time", "start_soc", "trip_distance", "dest_category")

DEFAULT_LOG_FEATURES = frozenset({"trip_distance", "cum_distance_since_charge"})


@dataclass(frozen=True)
class TripRecord:
    vehicle_id: str
    departure_time: float
    arrival_time: float
    start_soc: float
    trip_distance: float
    dest_category: int
    cum_distance_since_charge: float
    label: ChargeLevel


_FLOAT_FIELDS = (
    "departure_time",
    "arrival_time",
    "start_soc",
    "trip_distance",
    "cum_distance_since_charge",
)


def _range_problem(name: str, value: float) -> str | None:
    if not math.isfinite(value):
        return f"{name} is not finite ({value!r})"
    if name in ("departure_time", "arrival_time") and not 0.0 <= value < 24.0:
        return f"{name}={value!r} outside [0, 24)"
    if name == "start_soc" and not 0.0 <= value <= 100.0:
        return f"start_soc={value!r} outside [0, 100]"
    if name == "trip_distance" and not value > 0.0:
        return f"trip_distance={value!r} must be > 0"
    if name == "cum_distance_since_charge" and not value >= 0.0:
        return f"cum_distance_since_charge={value!r} must be >= 0"
    return None


@dataclass
class Dataset:
    """Column-oriented collection of trips.

    Row order is significant and is preserved by CSV round-trips.
    """

    vehicle_id: np.ndarray
    departure_time: np.ndarray
    arrival_time: np.ndarray
    start_soc: np.ndarray
    trip_distance: np.ndarray
    dest_category: np.ndarray
    cum_distance_since_charge: np.ndarray
    label: np.ndarray
    row_id: np.ndarray = None  # type: ignore[assignment]
    provenance: str = "real"
    seed: int | None = None

    def __post_init__(self):
        self.vehicle_id = np.asarray(self.vehicle_id, dtype=object)
        for name in _FLOAT_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.dest_category = np.asarray(self.dest_category, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)
        n = len(self.label)
        if self.row_id is None:
            self.row_id = np.arange(n, dtype=np.int64)
        else:
            self.row_id = np.asarray(self.row_id, dtype=np.int64)
        for f in CSV_COLUMNS + ("row_id",):
            if len(getattr(self, f)) != n:
                raise ValidationError(f"column {f} has length {len(getattr(self, f))}, expected {n}")
        if self.provenance not in ("real", "synthetic"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.label)

    def column(self, name: str) -> np.ndarray:
        if name not in CSV_COLUMNS and name != "row_id":
            raise ValidationError(f"unknown column {name!r}")
        return getattr(self, name)

    def take(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        cols = {name: getattr(self, name)[idx] for name in CSV_COLUMNS + ("row_id",)}
        return Dataset(**cols, provenance=self.provenance, seed=self.seed)

    def records(self) -> Iterator[TripRecord]:
        for i in range(len(self)):
            yield TripRecord(
                vehicle_id=str(self.vehicle_id[i]),
                departure_time=float(self.departure_time[i]),
                arrival_time=float(self.arrival_time[i]),
                start_soc=float(self.start_soc[i]),
                trip_distance=float(self.trip_distance[i]),
                dest_category=int(self.dest_category[i]),
                cum_distance_since_charge=float(self.cum_distance_since_charge[i]),
                label=ChargeLevel(int(self.label[i])),
            )

    @classmethod
    def from_records(cls, records: Iterable[TripRecord], **kwargs) -> "Dataset":
        records = list(records)
        cols = {name: [getattr(r, name) for r in records] for name in CSV_COLUMNS}
        cols["label"] = [int(v) for v in cols["label"]]
        return cls(**cols, **kwargs)

    def validate(self) -> None:
        """Raise :class:`ValidationError` naming the first offending row."""
        if len(self) == 0:
            raise ValidationError("dataset is empty")
        for name in _FLOAT_FIELDS:
            col = getattr(self, name)
            for i in np.flatnonzero(~_column_ok(name, col))[:1]:
                raise ValidationError(f"row {i}: {_range_problem(name, float(col[i]))}")
        bad = np.flatnonzero((self.dest_category < 0) | (self.dest_category > 3))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: dest_category={self.dest_category[bad[0]]} outside 0..3")
        bad = np.flatnonzero((self.label < 0) | (self.label > 3))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: label={self.label[bad[0]]} outside 0..3")

    def class_counts(self, n_classes: int = 4) -> np.ndarray:
        return np.bincount(self.label, minlength=n_classes)


def _column_ok(name: str, col: np.ndarray) -> np.ndarray:
    ok = np.isfinite(col)
    with np.errstate(invalid="ignore"):
        if name in ("departure_time", "arrival_time"):
            ok &= (col >= 0.0) & (col < 24.0)
        elif name == "start_soc":
            ok &= (col >= 0.0) & (col <= 100.0)
        elif name == "trip_distance":
            ok &= col > 0.0
        elif name == "cum_distance_since_charge":
            ok &= col >= 0.0
    return ok


# --------------------------------------------------------------------------
# CSV


def _parse_dest(token: str) -> int:
    token = token.strip()
    if token.lower() in DEST_NAMES:
        return DEST_NAMES.index(token.lower())
    code = int(token)
    if not 0 <= code <= 3:
        raise ValueError(f"dest_category={code} outside 0..3")
    return code


def load_csv(path: str | Path, has_header: bool = True) -> Dataset:
    """Parse a trip CSV whose columns follow :data:`CSV_COLUMNS`.

    Errors name the 1-based line number of the offending row.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    cols: dict[str, list] = {name: [] for name in CSV_COLUMNS}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                header = [h.strip() for h in row]
                if tuple(header) != CSV_COLUMNS:
                    raise ValidationError(f"{path}:1: header {header} does not match {list(CSV_COLUMNS)}")
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ValidationError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                values = {
                    "vehicle_id": row[0].strip(),
                    "dest_category": _parse_dest(row[5]),
                    "label": int(ChargeLevel.parse(row[7])),
                }
                for j, name in enumerate(CSV_COLUMNS):
                    if name in _FLOAT_FIELDS:
                        values[name] = float(row[j])
            except (ValueError, KeyError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed row ({exc})") from None
            for name in _FLOAT_FIELDS:
                problem = _range_problem(name, values[name])
                if problem:
                    raise ValidationError(f"{path}:{lineno}: {problem}")
            for name in CSV_COLUMNS:
                cols[name].append(values[name])
    if not cols["label"]:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(**cols, provenance="real")


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(ds)):
            writer.writerow(
                [
                    ds.vehicle_id[i],
                    _fmt(ds.departure_time[i]),
                    _fmt(ds.arrival_time[i]),
                    _fmt(ds.start_soc[i]),
                    _fmt(ds.trip_distance[i]),
                    int(ds.dest_category[i]),
                    _fmt(ds.cum_distance_since_charge[i]),
                    ChargeLevel(int(ds.label[i])).name,
                ]
            )


# --------------------------------------------------------------------------
# Splitting


def _largest_remainder(total: int, ratios: np.ndarray) -> np.ndarray:
    raw = ratios * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def _stratified_allocation(class_sizes: np.ndarray, ratios: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Per-class part sizes whose column sums equal ``totals``.

    Each class gets floor(r_p * n_c) rows per part plus at most one extra,
    so every part is within one row of the exact class proportion.
    """
    raw = class_sizes[:, None] * ratios[None, :]
    alloc = np.floor(raw).astype(np.int64)
    frac = raw - alloc
    left = class_sizes - alloc.sum(axis=1)
    room = totals - alloc.sum(axis=0)
    order = np.argsort(-frac, axis=None, kind="stable")
    for flat in order:
        c, p = divmod(int(flat), len(ratios))
        if left[c] > 0 and room[p] > 0:
            alloc[c, p] += 1
            left[c] -= 1
            room[p] -= 1
    # greedy can strand a unit when capacity is tight; place it where room remains
    for c in np.flatnonzero(left > 0):
        for p in np.flatnonzero(room > 0):
            while left[c] > 0 and room[p] > 0:
                alloc[c, p] += 1
                left[c] -= 1
                room[p] -= 1
    return alloc


def split_dataset(
    ds: Dataset,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    stratify_on_label: bool = True,
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle and cut ``ds`` into train/validation/test parts."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must be three non-negative fractions summing to 1, got {list(ratios)}")
    n = len(ds)
    totals = _largest_remainder(n, r)
    if np.any(totals == 0):
        raise ValidationError(f"split of {n} rows with ratios {list(ratios)} leaves an empty part")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    if stratify_on_label:
        classes = np.unique(ds.label)
        sizes = np.array([(ds.label == c).sum() for c in classes])
        if np.any(sizes < 3):
            small = classes[sizes < 3].tolist()
            raise ValidationError(f"classes {small} have fewer rows than split parts")
        alloc = _stratified_allocation(sizes, r, totals)
        for ci, c in enumerate(classes):
            idx = rng.permutation(np.flatnonzero(ds.label == c))
            bounds = np.cumsum(alloc[ci])
            for p, chunk in enumerate(np.split(idx, bounds[:-1])):
                parts[p].append(chunk)
    else:
        idx = rng.permutation(n)
        bounds = np.cumsum(totals)
        for p, chunk in enumerate(np.split(idx, bounds[:-1])):
            parts[p].append(chunk)
    out = []
    for chunks in parts:
        idx = np.sort(np.concatenate(chunks))
        out.append(ds.take(idx))
    return out[0], out[1], out[2]


# --------------------------------------------------------------------------
# Log + min-max preprocessing


@dataclass(frozen=True)
class FeatureTransform:
    name: str
    apply_log: bool
    min_t: float
    max_t: float

    @property
    def constant(self) -> bool:
        return self.max_t == self.min_t

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        t = np.log1p(x) if self.apply_log else x
        if self.constant:
            return np.zeros_like(t)
        return (t - self.min_t) / (self.max_t - self.min_t)


@dataclass(frozen=True)
class TransformParams:
    features: tuple[FeatureTransform, ...]
    clamp: tuple[float, float] = (-0.5, 1.5)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def constant_features(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features if f.constant)

    def __getitem__(self, name: str) -> FeatureTransform:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "clamp": list(self.clamp),
            "features": [
                {"name": f.name, "apply_log": f.apply_log, "min_t": f.min_t, "max_t": f.max_t}
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformParams":
        return cls(
            features=tuple(FeatureTransform(**f) for f in d["features"]),
            clamp=tuple(d.get("clamp", (-0.5, 1.5))),
        )


def fit_transform(
    train: Dataset,
    features: Sequence[str] = FORECAST_FEATURES,
    log_features: Iterable[str] | None = None,
) -> TransformParams:
    """Fit per-feature log1p/min-max parameters on training rows only.

    ``log_features`` defaults to the skewed distance columns; time-of-day,
    SOC and the destination code are min-max scaled without a log.
    """
    if len(train) == 0:
        raise ValidationError("cannot fit a transform on an empty dataset")
    log_set = DEFAULT_LOG_FEATURES if log_features is None else frozenset(log_features)
    out = []
    for name in features:
        if name not in NUMERIC_FEATURES:
            raise ValidationError(f"{name!r} is not a numeric trip feature")
        col = train.column(name).astype(np.float64)
        apply_log = name in log_set
        t = np.log1p(col) if apply_log else col
        if not np.all(np.isfinite(t)):
            raise ValidationError(f"feature {name!r} has non-finite values after log1p")
        out.append(FeatureTransform(name, apply_log, float(t.min()), float(t.max())))
    return TransformParams(tuple(out))


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: tuple[str, ...]
    onehot_blocks: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def apply_transform(params: TransformParams, ds: Dataset, dest_encoding: str = "onehot") -> FeatureMatrix:
    """Map ``ds`` into the fitted feature space.

    ``dest_encoding`` is ``"onehot"`` (four indicator columns, for network
    inputs) or ``"code"`` (min-max scaled category code, for clustering).
    Values outside the fitted range are clamped to ``params.clamp``.
    """
    if dest_encoding not in ("onehot", "code"):
        raise ValidationError(f"unknown dest_encoding {dest_encoding!r}")
    lo, hi = params.clamp
    blocks: list[np.ndarray] = []
    names: list[str] = []
    onehot: list[tuple[int, int]] = []
    width = 0
    for ft in params.features:
        raw = ds.column(ft.name)
        if ft.name == "dest_category" and dest_encoding == "onehot":
            block = np.zeros((len(ds), 4))
            block[np.arange(len(ds)), raw.astype(np.int64)] = 1.0
            blocks.append(block)
            names.extend(f"dest_{d}" for d in DEST_NAMES)
            onehot.append((width, width + 4))
            width += 4
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            t = ft(raw)
        bad = np.flatnonzero(~np.isfinite(t))
        if bad.size:
            i = bad[0]
            raise ValidationError(f"row {int(ds.row_id[i])}: feature {ft.name!r} is NaN after transform (value {raw[i]!r})")
        blocks.append(np.clip(t, lo, hi)[:, None])
        names.append(ft.name)
        width += 1
    values = np.hstack(blocks) if blocks else np.zeros((len(ds), 0))
    return FeatureMatrix(values, tuple(names), tuple(onehot))


# --------------------------------------------------------------------------
# Synthetic generator


@dataclass(frozen=True)
class Segment:
    """A latent trip archetype.

    Any shape field left as ``None`` inherits the top-level value from the
    enclosing :class:`SynthConfig`.  ``level_bias`` adds to the charge-level
    logits (None, L1, L2, DC-Fast) of every trip drawn from the segment.
    """

    weight: float
    departure_peak: tuple[float, float] | None = None
    soc_high_mass: float | None = None
    distance_lognormal: tuple[float, float] | None = None
    dest_probs: tuple[float, float, float, float] | None = None
    level_bias: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LabelRule:
    """Linear charge-level propensities (logits) relative to the None class.

    Per-class coefficients are ordered (None, L1, L2, DC-Fast).  The feature
    inputs are ``1 - soc/100`` (battery depletion), ``log1p`` of the trip and
    cumulative distances, plus a per-destination offset table.  Intercepts
    are solved at generation time so the class marginals hit the configured
    charging share and level mix.
    """

    depletion: tuple[float, float, float, float] = (0.0, 2.0, 2.5, 3.0)
    log_cum_distance: tuple[float, float, float, float] = (0.0, 0.6, 0.8, 1.0)
    log_trip_distance: tuple[float, float, float, float] = (0.0, -0.3, 0.0, 1.2)
    dest_offsets: tuple[tuple[float, float, float, float], ...] = (
        (0.0, 1.5, 1.0, -2.0),  # home
        (0.0, -0.5, 1.0, -1.5),  # work
        (0.0, -2.0, 0.5, 1.0),  # public
        (0.0, -1.0, -0.5, 0.0),  # other
    )


# Four archetypes: morning commute, evening return home, midday errands and
# long-distance trips.  Their charge-level biases make the label depend on
# segment membership, which is what micro-clustering is meant to recover.
DEFAULT_SEGMENTS = (
    Segment(0.30, (8.0, 1.0), 0.85, (2.3, 0.45), (0.04, 0.88, 0.04, 0.04), (0.0, -1.5, 1.2, -3.0)),
    Segment(0.30, (17.5, 1.2), 0.30, (2.2, 0.5), (0.90, 0.02, 0.03, 0.05), (0.0, 1.2, 0.4, -3.0)),
    Segment(0.25, (12.5, 1.5), 0.80, (1.2, 0.5), (0.06, 0.04, 0.45, 0.45), (0.0, -2.5, -0.8, -1.5)),
    Segment(0.15, (11.0, 2.5), 0.55, (3.6, 0.35), (0.10, 0.05, 0.50, 0.35), (0.0, -3.0, -1.0, 2.0)),
)


@dataclass(frozen=True)
class SynthConfig:
    """Shape targets for synthetic trip data.

    Defaults mirror the published BEV dataset: 148,064 trips of which 35,441
    end in a charging event, daytime departures and mostly full batteries.
    The L1/L2/DC-Fast mix is not published and is an assumption.
    """

    n_trips: int = 148_064
    charging_share: float = 35_441 / 148_064
    level_mix: tuple[float, float, float] = (0.25, 0.60, 0.15)
    departure_peak: tuple[float, float] = (13.0, 3.5)
    soc_high_mass: float = 0.6
    distance_lognormal: tuple[float, float] = (1.86, 1.0)
    dest_probs: tuple[float, float, float, float] = (0.40, 0.20, 0.15, 0.25)
    label_rule: LabelRule = field(default_factory=LabelRule)
    segments: tuple[Segment, ...] = DEFAULT_SEGMENTS
    n_vehicles: int = 132
    cum_zero_mass: float = 0.05
    cum_distance_lognormal: tuple[float, float] = (3.0, 0.9)

    def validate(self) -> None:
        if self.n_trips <= 0:
            raise ValidationError("n_trips must be positive")
        if not 0.0 < self.charging_share < 1.0:
            raise ValidationError(f"charging_share must lie in (0, 1), got {self.charging_share}")
        _check_simplex("level_mix", self.level_mix, 3)
        _check_simplex("dest_probs", self.dest_probs, 4)
        if not 0.0 <= self.soc_high_mass <= 1.0:
            raise ValidationError("soc_high_mass must be a fraction")
        if self.n_vehicles < 1:
            raise ValidationError("n_vehicles must be positive")
        for s in self.segments:
            if s.weight <= 0:
                raise ValidationError("segment weights must be positive")
            if s.dest_probs is not None:
                _check_simplex("segment dest_probs", s.dest_probs, 4)
            if s.soc_high_mass is not None and not 0.0 <= s.soc_high_mass <= 1.0:
                raise ValidationError("segment soc_high_mass must be a fraction")

    def resolved_segments(self) -> tuple[Segment, ...]:
        segs = self.segments or (Segment(1.0),)
        return tuple(
            replace(
                s,
                departure_peak=s.departure_peak or self.departure_peak,
                soc_high_mass=self.soc_high_mass if s.soc_high_mass is None else s.soc_high_mass,
                distance_lognormal=s.distance_lognormal or self.distance_lognormal,
                dest_probs=s.dest_probs or self.dest_probs,
            )
            for s in segs
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "label_rule":
                v = {g.name: _listify(getattr(v, g.name)) for g in fields(v)}
            elif f.name == "segments":
                v = [{g.name: _listify(getattr(s, g.name)) for g in fields(s)} for s in v]
            else:
                v = _listify(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        kwargs = {}
        names = {f.name for f in fields(cls)}
        for key, v in d.items():
            if key not in names:
                raise ValidationError(f"unknown synthetic config key {key!r}")
            if key == "label_rule":
                v = LabelRule(**{k: _tuplify(x) for k, x in v.items()})
            elif key == "segments":
                v = tuple(Segment(**{k: _tuplify(x) for k, x in s.items()}) for s in v)
            else:
                v = _tuplify(v)
            kwargs[key] = v
        return cls(**kwargs)


def _listify(v):
    if isinstance(v, tuple):
        return [_listify(x) for x in v]
    return v


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _check_simplex(name: str, probs: Sequence[float], size: int) -> None:
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (size,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"{name} must be {size} non-negative weights summing to 1, got {list(probs)}")


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _calibrate_intercepts(logits: np.ndarray, target: np.ndarray, iters: int = 500) -> np.ndarray:
    """Intercepts b such that mean(softmax(logits + b)) == target."""
    live = target > 0
    b = np.where(live, 0.0, -np.inf)
    for _ in range(iters):
        m = _softmax_rows(logits + b).mean(axis=0)
        if np.max(np.abs(m - target)) < 1e-12:
            break
        b[live] += np.log(target[live] / m[live])
    return b - b[0]


def generate_synthetic(config: SynthConfig | None = None, seed: int = 0) -> Dataset:
    """Draw a seeded trip dataset whose labels follow ``config.label_rule``."""
    config = config or SynthConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    n = config.n_trips
    segs = config.resolved_segments()
    w = np.array([s.weight for s in segs], dtype=np.float64)
    seg = rng.choice(len(segs), size=n, p=w / w.sum())

    dep = np.empty(n)
    soc = np.empty(n)
    dist = np.empty(n)
    dest = np.empty(n, dtype=np.int64)
    bias = np.empty((n, 4))
    for si, s in enumerate(segs):
        idx = np.flatnonzero(seg == si)
        m = idx.size
        mu, sd = s.departure_peak
        dep[idx] = rng.normal(mu, sd, m)
        high = rng.random(m) < s.soc_high_mass
        soc[idx] = np.where(high, rng.uniform(80.0, 100.0, m), 15.0 + 65.0 * rng.beta(2.0, 1.6, m))
        dmu, dsig = s.distance_lognormal
        dist[idx] = rng.lognormal(dmu, dsig, m)
        dest[idx] = rng.choice(4, size=m, p=np.asarray(s.dest_probs) / np.sum(s.dest_probs))
        bias[idx] = s.level_bias

    dep = np.round(np.mod(dep, 24.0), 4) % 24.0
    soc = np.round(np.clip(soc, 0.0, 100.0), 2)
    dist = np.maximum(np.round(dist, 3), 0.001)
    speed = rng.uniform(18.0, 45.0, n)
    arr = np.round(np.mod(dep + dist / speed, 24.0), 4) % 24.0
    cmu, csig = config.cum_distance_lognormal
    cum = np.where(rng.random(n) < config.cum_zero_mass, 0.0, rng.lognormal(cmu, csig, n))
    cum = np.round(cum, 3)
    vehicles = rng.integers(0, config.n_vehicles, n)

    rule = config.label_rule
    logits = (
        bias
        + np.outer(1.0 - soc / 100.0, rule.depletion)
        + np.outer(np.log1p(cum), rule.log_cum_distance)
        + np.outer(np.log1p(dist), rule.log_trip_distance)
        + np.asarray(rule.dest_offsets)[dest]
    )
    share = config.charging_share
    target = np.array([1.0 - share] + [share * p for p in config.level_mix])
    logits = logits + _calibrate_intercepts(logits, target)
    probs = _softmax_rows(logits)
    u = rng.random(n)
    label = np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), 3)

    return Dataset(
        vehicle_id=np.array([f"BEV{v:03d}" for v in vehicles], dtype=object),
        departure_time=dep,
        arrival_time=arr,
        start_soc=soc,
        trip_distance=dist,
        dest_category=dest,
        cum_distance_since_charge=cum,
        label=label,
        provenance="synthetic",
        seed=seed,
    )
