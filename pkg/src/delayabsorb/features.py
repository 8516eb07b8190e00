"""Numeric feature vectors for both stages.

Categoricals become ordinal indices from lexicographically sorted training
dictionaries (0 means unseen). Weather gaps are filled with per-airport
training medians and flagged.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import JoinedFlight
from .rotation import RotationLink

ENCODER_VERSION = "1"
LOW_VIS_MILES = 3.0

CATEGORICAL = ("carrier", "origin", "dest", "month", "dep_time_block")
WEATHER = ("wind", "precip", "visibility", "humidity")
NUMERIC = ("distance", "prev_delay_min", "sched_turnaround_min") + WEATHER
_OBS_ATTR = {"wind": "wind_speed", "precip": "precipitation",
             "visibility": "visibility", "humidity": "relative_humidity"}
# used only when the training split carries no weather at all
_NEUTRAL_WEATHER = {"wind": 0.0, "precip": 0.0, "visibility": 10.0, "humidity": 50.0}

FEATURE_NAMES = (
    "carrier", "origin", "dest", "month", "dep_time_block",
    "day_of_week", "dep_hour", "sched_dep_minute_of_day", "sched_arr_minute_of_day",
    "distance", "prev_delay_min", "sched_turnaround_min",
    "wind", "precip", "visibility", "humidity",
    "wx_severity", "low_vis_flag", "dep_hour_x_low_vis", "turnaround_x_wx_severity",
    "weather_missing_flag", "no_predecessor_flag",
)
ABSORB_SCORE = "absorb_score"


class EncoderFormatError(ValueError):
    pass


@dataclass
class EncoderState:
    categories: dict[str, dict[str, int]]
    numeric_stats: dict[str, tuple[float, float]]
    weather_medians: dict[str, dict[str, float]]
    global_medians: dict[str, float]
    zero_variance: list[str] = field(default_factory=list)

    def code(self, feature: str, value: str) -> int:
        return self.categories[feature].get(value, 0)

    def zscore(self, name: str, value: float) -> float:
        mean, sd = self.numeric_stats[name]
        return (value - mean) / sd

    def impute(self, airport: str, name: str) -> float:
        med = self.weather_medians.get(airport)
        if med is not None and name in med:
            return med[name]
        return self.global_medians[name]

    def to_dict(self) -> dict:
        return {
            "format": "delayabsorb.encoder",
            "version": ENCODER_VERSION,
            "categories": self.categories,
            "numeric_stats": {k: list(v) for k, v in self.numeric_stats.items()},
            "weather_medians": self.weather_medians,
            "global_medians": self.global_medians,
            "zero_variance": self.zero_variance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderState":
        if doc.get("format") != "delayabsorb.encoder" or doc.get("version") != ENCODER_VERSION:
            raise EncoderFormatError(f"unsupported encoder document version {doc.get('version')!r}")
        try:
            return cls(
                categories={k: dict(v) for k, v in doc["categories"].items()},
                numeric_stats={k: (float(v[0]), float(v[1])) for k, v in doc["numeric_stats"].items()},
                weather_medians=doc["weather_medians"],
                global_medians=doc["global_medians"],
                zero_variance=list(doc["zero_variance"]),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise EncoderFormatError(f"malformed encoder document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EncoderState":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise EncoderFormatError(f"truncated or invalid encoder document: {exc}") from exc
        return cls.from_dict(doc)


def _categorical_values(j: JoinedFlight) -> dict[str, str]:
    f = j.flight
    return {"carrier": f.carrier, "origin": f.origin, "dest": f.dest,
            "month": str(f.flight_date.month), "dep_time_block": f.dep_time_block}


def _raw_weather(j: JoinedFlight) -> dict[str, float | None]:
    if j.weather is None:
        return dict.fromkeys(WEATHER)
    return {k: getattr(j.weather, attr) for k, attr in _OBS_ATTR.items()}


def fit_encoders(joined: Sequence[JoinedFlight], links: Sequence[RotationLink | None]) -> EncoderState:
    """Fit dictionaries, standardization stats and weather medians on training rows."""
    if not joined:
        raise ValueError("cannot fit encoders on an empty training set")
    if len(links) != len(joined):
        raise ValueError("joined and links must be parallel sequences")
    seen = defaultdict(set)
    columns: dict[str, list[float]] = defaultdict(list)
    per_airport: dict = defaultdict(lambda: defaultdict(list))
    for j, link in zip(joined, links):
        for k, v in _categorical_values(j).items():
            seen[k].add(v)
        columns["distance"].append(j.flight.distance)
        if link is not None:
            columns["prev_delay_min"].append(link.prev_delay_min)
            columns["sched_turnaround_min"].append(link.sched_turnaround_min)
        for k, v in _raw_weather(j).items():
            if v is not None:
                columns[k].append(v)
                per_airport[j.flight.origin][k].append(v)

    categories = {k: {v: i + 1 for i, v in enumerate(sorted(seen[k]))} for k in CATEGORICAL}
    stats, flagged = {}, []
    for name in NUMERIC:
        vals = np.asarray(columns.get(name, ()), dtype=float)
        mean = float(vals.mean()) if vals.size else 0.0
        sd = float(vals.std()) if vals.size else 0.0
        if not sd > 0:
            sd = 1.0
            flagged.append(name)
        stats[name] = (mean, sd)
    global_medians = {k: (float(np.median(columns[k])) if columns.get(k) else _NEUTRAL_WEATHER[k])
                      for k in WEATHER}
    medians = {apt: {k: float(np.median(v)) for k, v in sorted(fields.items())}
               for apt, fields in sorted(per_airport.items())}
    return EncoderState(categories, stats, medians, global_medians, flagged)


def compute_wx_severity(wind: float, precip: float, visibility: float, humidity: float,
                        encoder: EncoderState) -> float:
    """Mean of the z-scores of wind, precipitation, humidity and inverted visibility."""
    z = (encoder.zscore("wind", wind) + encoder.zscore("precip", precip)
         - encoder.zscore("visibility", visibility) + encoder.zscore("humidity", humidity))
    return z / 4.0


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]


def _row(j: JoinedFlight, link: RotationLink | None, encoder: EncoderState) -> list[float]:
    f = j.flight
    cats = _categorical_values(j)
    raw = _raw_weather(j)
    wx = {k: (v if v is not None else encoder.impute(f.origin, k)) for k, v in raw.items()}
    sev = compute_wx_severity(wx["wind"], wx["precip"], wx["visibility"], wx["humidity"], encoder)
    low_vis = 1.0 if wx["visibility"] < LOW_VIS_MILES else 0.0
    dep_hour = f.sched_dep.hour
    if link is None:
        prev_delay, turnaround, no_pred = 0.0, 0.0, 1.0
    else:
        prev_delay, turnaround, no_pred = float(link.prev_delay_min), float(link.sched_turnaround_min), 0.0
    return [
        *(float(encoder.code(k, cats[k])) for k in CATEGORICAL),
        float(f.day_of_week), float(dep_hour),
        float(f.sched_dep.hour * 60 + f.sched_dep.minute),
        float(f.sched_arr.hour * 60 + f.sched_arr.minute),
        float(f.distance), prev_delay, turnaround,
        wx["wind"], wx["precip"], wx["visibility"], wx["humidity"],
        sev, low_vis, dep_hour * low_vis, turnaround * sev,
        1.0 if j.weather_missing else 0.0, no_pred,
    ]


def build_feature_vector(j: JoinedFlight, link: RotationLink | None, absorb_score: float | None,
                         encoder: EncoderState) -> FeatureVector:
    vals = _row(j, link, encoder)
    names = FEATURE_NAMES
    if absorb_score is not None:
        vals.append(float(absorb_score))
        names = FEATURE_NAMES + (ABSORB_SCORE,)
    return FeatureVector(np.asarray(vals, dtype=float), names)


def build_matrix(joined: Sequence[JoinedFlight], links: Sequence[RotationLink | None],
                 encoder: EncoderState, absorb_scores: Sequence[float] | None = None
                 ) -> tuple[np.ndarray, tuple[str, ...]]:
    """Row-wise :func:`build_feature_vector` as one dense matrix."""
    X = np.array([_row(j, link, encoder) for j, link in zip(joined, links)], dtype=float)
    X = X.reshape(len(joined), len(FEATURE_NAMES))
    names = FEATURE_NAMES
    if absorb_scores is not None:
        X = np.column_stack([X, np.asarray(absorb_scores, dtype=float)])
        names = FEATURE_NAMES + (ABSORB_SCORE,)
    return X, names


def write_feature_matrix(X: np.ndarray, names: Sequence[str], path, row_keys: Sequence[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["row_key"] if row_keys is not None else []) + list(names))
        for i, row in enumerate(X):
            cells = [repr(float(v)) for v in row]
            w.writerow(([row_keys[i]] if row_keys is not None else []) + cells)

