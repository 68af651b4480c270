"""Space-time mean-speed fields on a fixed patch grid, plus congestion events.

A field covers the whole corridor with patches of one segment (500 m default)
by one minute. Values are space-mean speeds in km/h; NaN marks a patch with no
observation. Congestion follows the operational definition: a segment counts
as congested once it has stayed below 40 km/h for 15 consecutive minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from .corridor import CorridorConfig
from .errors import GapError, RangeError, SchemaError

CONGESTION_THRESHOLD_KMH = 40.0
CONGESTION_PERSISTENCE_MIN = 15
SPEED_SANITY_KMH = 150.0


@dataclass
class MeanSpeedField:
    """Minute x segment grid of space-mean speeds (km/h, NaN = missing)."""

    t0: datetime
    values: np.ndarray  # shape (n_minutes, n_segments), float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise SchemaError("field values must be 2-D (minutes x segments)")
        finite = self.values[np.isfinite(self.values)]
        if finite.size and (finite.min() < 0.0 or finite.max() > SPEED_SANITY_KMH):
            raise RangeError(
                f"speeds outside [0, {SPEED_SANITY_KMH}] km/h: "
                f"[{finite.min():.2f}, {finite.max():.2f}]"
            )

    @property
    def n_minutes(self) -> int:
        return self.values.shape[0]

    @property
    def n_segments(self) -> int:
        return self.values.shape[1]

    def minute_at(self, index: int) -> datetime:
        return self.t0 + timedelta(minutes=index)

    def window(self, start_min: int, stop_min: int) -> "MeanSpeedField":
        """Sub-field over minute rows [start_min, stop_min)."""
        if not (0 <= start_min < stop_min <= self.n_minutes):
            raise SchemaError(f"window [{start_min}, {stop_min}) outside field")
        return MeanSpeedField(self.minute_at(start_min), self.values[start_min:stop_min].copy())

    def to_json(self) -> dict:
        vals = [[None if not np.isfinite(v) else round(float(v), 2) for v in row]
                for row in self.values]
        return {"t0": self.t0.isoformat(), "values": vals}

    @classmethod
    def from_json(cls, doc: dict) -> "MeanSpeedField":
        arr = np.array(
            [[np.nan if v is None else float(v) for v in row] for row in doc["values"]],
            dtype=np.float64,
        ).reshape(len(doc["values"]), -1)
        return cls(datetime.fromisoformat(doc["t0"]), arr)


@dataclass(frozen=True)
class CongestionEvent:
    onset_minute: int            # field row index of the 15th sub-threshold minute
    onset_time: datetime
    segment_range: tuple[int, int]   # [first, last] segment that triggered
    cleared_minute: int | None       # first row with no segment below threshold
    cleared_time: datetime | None


def ingest_speed_csv(path, cfg: CorridorConfig) -> MeanSpeedField:
    """Read a per-minute speed CSV into a field.

    Expected header: ``minute_iso8601,seg_000,...`` with one column per
    segment; empty cells are missing patches. Timestamps must advance in
    strict one-minute steps.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    expected = ["minute_iso8601"] + [f"seg_{i:03d}" for i in range(cfg.n_segments)]
    if list(df.columns) != expected:
        raise SchemaError(
            f"{path}: header mismatch, expected {expected[:2]}...{expected[-1]} "
            f"got {list(df.columns)[:3]}..."
        )
    if len(df) == 0:
        raise SchemaError(f"{path}: no data rows")
    try:
        stamps = [datetime.fromisoformat(s) for s in df["minute_iso8601"]]
    except ValueError as exc:
        raise SchemaError(f"{path}: bad timestamp: {exc}") from exc
    for prev, cur in zip(stamps, stamps[1:]):
        if cur - prev != timedelta(minutes=1):
            raise GapError(f"{path}: non-contiguous minutes {prev} -> {cur}")
    raw = df[expected[1:]].to_numpy()
    values = np.full(raw.shape, np.nan, dtype=np.float64)
    nonempty = raw != ""
    try:
        values[nonempty] = raw[nonempty].astype(np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric speed cell: {exc}") from exc
    return MeanSpeedField(stamps[0], values)


def write_speed_csv(field: MeanSpeedField, path) -> None:
    cols = {"minute_iso8601": [field.minute_at(m).isoformat() for m in range(field.n_minutes)]}
    for s in range(field.n_segments):
        col = field.values[:, s]
        cols[f"seg_{s:03d}"] = ["" if not np.isfinite(v) else f"{v:.2f}" for v in col]
    pd.DataFrame(cols).to_csv(path, index=False)


def detect_congestion(
    field: MeanSpeedField,
    threshold_kmh: float = CONGESTION_THRESHOLD_KMH,
    persistence_min: int = CONGESTION_PERSISTENCE_MIN,
) -> list[CongestionEvent]:
    """Find congestion events in a field.

    A segment qualifies at minute m when its last ``persistence_min`` values
    (inclusive) are all strictly below the threshold; missing values break the
    run. The event opens at the minute the persistence is first met and clears
    at the first later minute with no segment below the threshold.
    """
    below = np.where(np.isfinite(field.values), field.values < threshold_kmh, False)
    # run[m, s] = number of consecutive below-threshold minutes ending at m
    run = np.zeros_like(below, dtype=np.int64)
    for m in range(field.n_minutes):
        run[m] = np.where(below[m], (run[m - 1] if m else 0) + 1, 0)
    events: list[CongestionEvent] = []
    open_onset: int | None = None
    open_range: tuple[int, int] | None = None
    for m in range(field.n_minutes):
        if open_onset is None:
            hits = np.flatnonzero(run[m] >= persistence_min)
            if hits.size:
                open_onset = m
                open_range = (int(hits[0]), int(hits[-1]))
        else:
            if not below[m].any():
                events.append(CongestionEvent(
                    onset_minute=open_onset,
                    onset_time=field.minute_at(open_onset),
                    segment_range=open_range,
                    cleared_minute=m,
                    cleared_time=field.minute_at(m),
                ))
                open_onset, open_range = None, None
    if open_onset is not None:
        events.append(CongestionEvent(
            onset_minute=open_onset,
            onset_time=field.minute_at(open_onset),
            segment_range=open_range,
            cleared_minute=None,
            cleared_time=None,
        ))
    return events


def aggregate_sim_to_field(log, cfg: CorridorConfig, n_minutes: int,
                           t0: datetime | None = None) -> MeanSpeedField:
    """Collapse per-vehicle traces to patch mean speeds by the generalized
    (distance travelled / time spent) definitions.

    ``log`` needs arrays ``steps``, ``cells``, ``speeds`` (position at step
    start and the executed speed). Motion within a step is treated as uniform,
    so distance and time split exactly across patch boundaries. Patches with
    zero vehicle time come back NaN.
    """
    n_seg = cfg.n_segments
    seg_len = float(cfg.cells_per_segment)
    spm = cfg.steps_per_minute
    dist = np.zeros((n_minutes, n_seg))
    time = np.zeros((n_minutes, n_seg))
    steps = np.asarray(log.steps)
    cells = np.asarray(log.cells, dtype=np.float64)
    speeds = np.asarray(log.speeds, dtype=np.float64)

    def put(m: np.ndarray, xa: np.ndarray, xb: np.ndarray, f: np.ndarray):
        """Accumulate one sub-step interval: minute m, path [xa, xb), duration f."""
        ok = (m >= 0) & (m < n_minutes)
        m, xa, xb, f = m[ok], xa[ok], xb[ok], f[ok]
        s0 = np.minimum((xa // seg_len).astype(np.int64), n_seg - 1)
        # no distance covered in this interval (stopped, or a degenerate
        # sliver at a minute boundary): all its time in the occupied segment
        moving = (xb - xa) > 0
        np.add.at(time, (m[~moving], s0[~moving]), f[~moving])
        m, xa, xb, f, s0 = m[moving], xa[moving], xb[moving], f[moving], s0[moving]
        if m.size == 0:
            return
        total = xb - xa
        edge = (s0 + 1) * seg_len
        first = np.minimum(xb, np.minimum(edge, n_seg * seg_len)) - xa
        first = np.maximum(first, 0.0)
        np.add.at(dist, (m, s0), first)
        np.add.at(time, (m, s0), f * first / total)
        rest = np.minimum(xb, n_seg * seg_len) - edge
        cross = rest > 0
        if cross.any():
            s1 = s0[cross] + 1
            keep = s1 < n_seg
            mc, rc, fc, tc = m[cross][keep], rest[cross][keep], f[cross][keep], total[cross][keep]
            np.add.at(dist, (mc, s1[keep]), rc)
            np.add.at(time, (mc, s1[keep]), fc * rc / tc)

    if steps.size:
        t_f = steps.astype(np.float64)
        m0 = (t_f / spm).astype(np.int64)
        m1 = ((t_f + 1.0) / spm - 1e-9).astype(np.int64)
        straddle = m1 > m0
        tau = m1 * spm                      # minute boundary inside (t, t+1)
        f0 = np.where(straddle, tau - t_f, 1.0)
        xm = cells + speeds * f0
        put(m0, cells, xm, f0)
        if straddle.any():
            put(m1[straddle], xm[straddle], (cells + speeds)[straddle],
                (t_f + 1.0 - tau)[straddle])

    with np.errstate(invalid="ignore", divide="ignore"):
        grid = np.where(time > 0, dist / np.maximum(time, 1e-300) * cfg.kmh_per_cell, np.nan)
    return MeanSpeedField(t0 or datetime(2000, 1, 1), grid)
