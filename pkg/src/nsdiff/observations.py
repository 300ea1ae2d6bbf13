"""Non-synchronous observation schedules, synthetic data and CSV I/O.

A schedule holds the merged interior observation times together with
per-component observed/missing masks; both components count as missing at
the horizon, which closes the final inter-observation interval. Interior
times always carry at least one observed component (a time with no
observation carries no information and is rejected).
"""

import csv
import enum
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels


class TimeClass(enum.Enum):
    FIRST_MISSING = "first-missing"
    SECOND_MISSING = "second-missing"
    BOTH_MISSING = "both-missing"
    BOTH_OBSERVED = "both-observed"


@dataclass(frozen=True)
class ObservationSchedule:
    """Merged times and per-component observation masks.

    ``times`` are the interior merged times t_1 < ... < t_n; the horizon T
    closes the last interval and is treated as missing in both components.
    ``observed1``/``observed2`` flag which component is observed at each
    interior time.
    """

    x0: np.ndarray
    horizon: float
    times: np.ndarray
    observed1: np.ndarray
    observed2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(2))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "observed1", np.asarray(self.observed1, dtype=bool))
        object.__setattr__(self, "observed2", np.asarray(self.observed2, dtype=bool))
        t = self.times
        if t.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if t.size and not np.all(np.diff(t) > 0.0):
            raise ValueError("times must be strictly increasing")
        if t.size and not (t[0] > 0.0 and t[-1] < self.horizon):
            raise ValueError("times must lie strictly inside (0, horizon)")
        if self.observed1.shape != t.shape or self.observed2.shape != t.shape:
            raise ValueError("observation masks must match times")
        if not np.all(self.observed1 | self.observed2):
            raise ValueError("every interior time needs at least one observed component")

    @property
    def n_interior(self):
        return int(self.times.size)

    @property
    def n_intervals(self):
        return self.n_interior + 1

    @property
    def grid(self):
        """All interval endpoints 0, t_1, ..., t_n, T."""
        return np.concatenate([[0.0], self.times, [self.horizon]])

    @property
    def n_missing(self):
        """Dimension of the missing-data vector (both components at T included)."""
        return int((~self.observed1).sum() + (~self.observed2).sum() + 2)

    def classify(self, i):
        """Class of merged time index i (1-based, i = n+1 is the horizon)."""
        if not 1 <= i <= self.n_intervals:
            raise IndexError(f"time index {i} outside 1..{self.n_intervals}")
        if i == self.n_intervals:
            return TimeClass.BOTH_MISSING
        o1 = bool(self.observed1[i - 1])
        o2 = bool(self.observed2[i - 1])
        if o1 and o2:
            return TimeClass.BOTH_OBSERVED
        if o1:
            return TimeClass.SECOND_MISSING
        return TimeClass.FIRST_MISSING

    def to_json_dict(self):
        return {
            "x0": list(map(float, self.x0)),
            "horizon": float(self.horizon),
            "times": list(map(float, self.times)),
            "observed1": list(map(bool, self.observed1)),
            "observed2": list(map(bool, self.observed2)),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(x0=np.array(d["x0"]), horizon=float(d["horizon"]),
                   times=np.array(d["times"], dtype=float),
                   observed1=np.array(d["observed1"], dtype=bool),
                   observed2=np.array(d["observed2"], dtype=bool))


@dataclass(frozen=True)
class Dataset:
    """Observed values aligned with a schedule; NaN marks missing entries."""

    y1: np.ndarray
    y2: np.ndarray
    source: str = "simulated"

    def __post_init__(self):
        object.__setattr__(self, "y1", np.asarray(self.y1, dtype=float))
        object.__setattr__(self, "y2", np.asarray(self.y2, dtype=float))

    def validate_against(self, schedule):
        if self.y1.shape != schedule.times.shape or self.y2.shape != schedule.times.shape:
            raise ValueError("dataset length does not match schedule")
        if not (np.all(np.isfinite(self.y1[schedule.observed1]))
                and np.all(np.isfinite(self.y2[schedule.observed2]))):
            raise ValueError("observed entries must be finite")
        if np.any(np.isfinite(self.y1[~schedule.observed1])) or \
                np.any(np.isfinite(self.y2[~schedule.observed2])):
            raise ValueError("values present at times marked missing")

    def to_json_dict(self):
        def col(v):
            return [None if not np.isfinite(x) else float(x) for x in v]

        return {"y1": col(self.y1), "y2": col(self.y2), "source": self.source}

    @classmethod
    def from_json_dict(cls, d):
        def col(v):
            return np.array([np.nan if x is None else float(x) for x in v])

        return cls(y1=col(d["y1"]), y2=col(d["y2"]), source=d.get("source", "file"))


def classify_time(schedule, i):
    return schedule.classify(i)


def _draw_times(n_obs, spacing, spacing_kind, rng):
    if n_obs < 1:
        raise ValueError("need at least one observation time")
    if spacing_kind == "fixed":
        return spacing * np.arange(1, n_obs + 1, dtype=float)
    if spacing_kind == "exponential":
        gaps = rng.exponential(scale=spacing, size=n_obs)
        return np.cumsum(gaps)
    raise ValueError("spacing_kind must be 'fixed' or 'exponential'")


def simulate_dataset(model, params, n_obs, omit=(0, 0), spacing=1.0,
                     spacing_kind="fixed", x0=None, fine_level=12, rng=None,
                     seed=None):
    """Simulate a fine-grid path and record a non-synchronous dataset.

    ``omit = (k1, k2)`` deletes k1 first-component and k2 second-component
    values at uniformly random interior times, never leaving a time with
    both components missing. The horizon is one average spacing beyond the
    last observation time. Deterministic given the seed.
    """
    if fine_level < 10:
        raise ValueError("fine simulation level must be at least 10")
    if rng is None:
        rng = np.random.default_rng(seed)
    x0 = np.asarray(model.default_x0 if x0 is None else x0, dtype=float).reshape(2)
    times = _draw_times(n_obs, spacing, spacing_kind, rng)
    horizon = float(times[-1] + spacing)
    k1, k2 = omit
    if k1 + k2 > n_obs:
        raise ValueError("cannot omit more component values than available times")
    drop1 = rng.choice(n_obs, size=k1, replace=False)
    keep = np.setdiff1d(np.arange(n_obs), drop1)
    if k2 > keep.size:
        raise ValueError("omission pattern would leave a time with no observation")
    drop2 = keep[rng.choice(keep.size, size=k2, replace=False)]
    observed1 = np.ones(n_obs, dtype=bool)
    observed2 = np.ones(n_obs, dtype=bool)
    observed1[drop1] = False
    observed2[drop2] = False

    states = _simulate_at_times(model, params, x0, times, fine_level, rng)
    y1 = np.where(observed1, states[:, 0], np.nan)
    y2 = np.where(observed2, states[:, 1], np.nan)
    schedule = ObservationSchedule(x0=x0, horizon=horizon, times=times,
                                   observed1=observed1, observed2=observed2)
    dataset = Dataset(y1=y1, y2=y2, source="simulated")
    dataset.validate_against(schedule)
    return schedule, dataset


def _simulate_at_times(model, params, x0, times, fine_level, rng):
    """Euler path on a 2^fine_level-per-unit grid, sampled at the given times."""
    state = x0.reshape(1, 2).copy()
    out = np.empty((times.size, 2))
    prev = 0.0
    for idx, t in enumerate(times):
        gap = t - prev
        n_steps = max(1, int(np.ceil(gap * 2 ** fine_level)))
        dt = gap / n_steps
        dW = rng.standard_normal((1, n_steps, 2)) * np.sqrt(dt)
        if model.name == "ou":
            state = _kernels.ou_euler(params.A, params.sigma_matrix, state, dW, dt)
        else:
            state, alive = _kernels.lv_euler(
                params.alpha, params.beta, params.gamma, params.zeta,
                params.sigma1, params.sigma2, model.literal_diffusion,
                state, dW, dt)
            if not alive[0]:
                raise RuntimeError(
                    "fine-grid simulation left the positive quadrant; "
                    "increase fine_level or soften the noise")
        out[idx] = state[0]
        prev = t
    return out


# ---------------------------------------------------------------------------
# CSV / JSON I/O


def _fmt(x):
    return "" if not np.isfinite(x) else repr(float(x))


def save_dataset(schedule, dataset, csv_path, meta_path=None):
    """Write `time,x1,x2` rows (empty cell = missing) and optional metadata."""
    dataset.validate_against(schedule)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "x1", "x2"])
        for t, a, b in zip(schedule.times, dataset.y1, dataset.y2):
            writer.writerow([repr(float(t)), _fmt(a), _fmt(b)])
    if meta_path is not None:
        meta = {"schedule": schedule.to_json_dict(), "source": dataset.source}
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")


def load_dataset(csv_path, meta_path=None, x0=None, horizon=None):
    """Read a `time,x1,x2` CSV into a schedule/dataset pair.

    Missing metadata is reconstructed: x0 defaults to the first row's
    observed values (components missing there fall back to 1.0) and the
    horizon to the last time plus the mean spacing.
    """
    times, y1, y2 = [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != ["time", "x1", "x2"]:
            raise ValueError("expected header 'time,x1,x2'")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValueError(f"malformed row {row!r}")
            try:
                t = float(row[0])
            except ValueError:
                raise ValueError(f"malformed time {row[0]!r}") from None
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                if not cell:
                    vals.append(np.nan)
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise ValueError(f"malformed number {cell!r}") from None
            if np.isnan(vals[0]) and np.isnan(vals[1]):
                raise ValueError(f"row at time {t} observes neither component")
            times.append(t)
            y1.append(vals[0])
            y2.append(vals[1])
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("no data rows")
    if np.any(np.diff(times) == 0.0):
        raise ValueError("duplicate observation times")
    if np.any(np.diff(times) < 0.0):
        raise ValueError("times must be sorted increasingly")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)

    if meta_path is not None:
        with open(meta_path) as fh:
            meta = json.load(fh)
        schedule = ObservationSchedule.from_json_dict(meta["schedule"])
        dataset = Dataset(y1=y1, y2=y2, source=meta.get("source", "file"))
        dataset.validate_against(schedule)
        return schedule, dataset

    if x0 is None:
        x0 = np.array([y1[0] if np.isfinite(y1[0]) else 1.0,
                       y2[0] if np.isfinite(y2[0]) else 1.0])
    if horizon is None:
        mean_gap = times[-1] / times.size
        horizon = float(times[-1] + mean_gap)
    schedule = ObservationSchedule(x0=x0, horizon=horizon, times=times,
                                   observed1=np.isfinite(y1),
                                   observed2=np.isfinite(y2))
    dataset = Dataset(y1=y1, y2=y2, source="file")
    dataset.validate_against(schedule)
    return schedule, dataset
