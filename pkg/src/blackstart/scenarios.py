"""Weighted season x outage-duration scenario sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

SEASONS = ("SP", "SU", "AU", "W")

# Historical TG outage-duration PMF (minutes -> probability)
DEFAULT_OUTAGE_PMF = {60: 0.1340, 120: 0.4290, 180: 0.2733, 240: 0.1637}

DEFAULT_HORIZON = 21
DEFAULT_DT = 15
DEFAULT_START = "08:45"


@dataclass(frozen=True)
class SeasonProfile:
    label: str
    load_shape: tuple[float, ...]
    pv_shape: tuple[float, ...]

    def __post_init__(self):
        if len(self.load_shape) != len(self.pv_shape):
            raise ValueError(f"season {self.label}: load and pv series lengths differ")
        if any(not 0.0 <= v <= 1.0 for v in self.pv_shape):
            raise ValueError(f"season {self.label}: pv output ratio outside [0, 1]")
        if any(v < 0 for v in self.load_shape):
            raise ValueError(f"season {self.label}: negative load multiplier")


@dataclass(frozen=True)
class OutageDistribution:
    durations: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.durations) != len(self.probabilities) or not self.durations:
            raise ValueError("durations and probabilities must be non-empty and aligned")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        total = math.fsum(self.probabilities)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"outage probabilities sum to {total!r}, not 1")

    @classmethod
    def from_mapping(cls, pmf: Mapping[int, float]) -> "OutageDistribution":
        items = sorted((int(k), float(v)) for k, v in pmf.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))


@dataclass(frozen=True)
class Scenario:
    id: str
    season: SeasonProfile
    outage_minutes: int
    probability: float
    tg_available: tuple[int, ...]

    @property
    def horizon(self) -> int:
        return len(self.tg_available)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    horizon: int
    dt_minutes: int
    start: str = DEFAULT_START

    def __iter__(self):
        return iter(self.scenarios)

    def __len__(self):
        return len(self.scenarios)

    def __getitem__(self, i):
        return self.scenarios[i]

    @property
    def dt_hours(self) -> float:
        return self.dt_minutes / 60.0

    def by_id(self, sid: str) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def subset(self, ids: Sequence[str], renormalize: bool = True) -> "ScenarioSet":
        chosen = [self.by_id(i) for i in ids]
        total = math.fsum(s.probability for s in chosen)
        if renormalize:
            chosen = [Scenario(s.id, s.season, s.outage_minutes, s.probability / total, s.tg_available)
                      for s in chosen]
        return ScenarioSet(tuple(chosen), self.horizon, self.dt_minutes, self.start)

    def clock(self, t: int) -> str:
        t0 = datetime.strptime(self.start, "%H:%M")
        return (t0 + timedelta(minutes=t * self.dt_minutes)).strftime("%H:%M")


def tg_availability(outage_minutes: int, horizon: int, dt: int) -> tuple[int, ...]:
    """0 until the first step boundary at or after the outage ends, then 1."""
    return tuple(1 if t * dt >= outage_minutes else 0 for t in range(horizon))


def build_scenarios(seasons: Sequence[SeasonProfile], outages: OutageDistribution,
                    horizon: int = DEFAULT_HORIZON, dt: int = DEFAULT_DT,
                    start: str = DEFAULT_START) -> ScenarioSet:
    """Cartesian product of equiprobable seasons and outage durations."""
    if not seasons:
        raise ValueError("at least one season profile is required")
    for s in seasons:
        if len(s.load_shape) != horizon:
            raise ValueError(f"season {s.label} has {len(s.load_shape)} steps, horizon is {horizon}")
    for d in outages.durations:
        if d % dt:
            raise ValueError(f"outage duration {d} min is not a multiple of dt={dt}")
    w = 1.0 / len(seasons)
    out = []
    for s in seasons:
        for d, p in zip(outages.durations, outages.probabilities):
            if p == 0:
                continue
            out.append(Scenario(
                id=f"{s.label}-{d}", season=s, outage_minutes=d, probability=w * p,
                tg_available=tg_availability(d, horizon, dt),
            ))
    return ScenarioSet(tuple(out), horizon, dt, start)


@dataclass(frozen=True)
class SynthesisParams:
    """Sampling model for synthetic season curves (daylight hours, amplitudes, noise)."""
    load_sigma: float = 0.04
    beta_concentration: float = 12.0
    pv_samples: int = 60
    load_samples: int = 30
    sunrise: Mapping[str, float] = None
    sunset: Mapping[str, float] = None
    pv_peak: Mapping[str, float] = None
    load_base: Mapping[str, Sequence[float]] = None

    def __post_init__(self):
        defaults = {
            "sunrise": {"SP": 6.5, "SU": 5.5, "AU": 7.0, "W": 7.75},
            "sunset": {"SP": 19.5, "SU": 20.75, "AU": 18.75, "W": 16.75},
            "pv_peak": {"SP": 0.80, "SU": 0.90, "AU": 0.70, "W": 0.50},
            # hourly multipliers 0..23 h on peak demand
            "load_base": {
                "SP": (0.55, 0.52, 0.50, 0.50, 0.52, 0.58, 0.68, 0.78, 0.82, 0.80, 0.78, 0.77,
                       0.76, 0.75, 0.75, 0.77, 0.82, 0.90, 0.92, 0.88, 0.80, 0.72, 0.64, 0.58),
                "SU": (0.60, 0.56, 0.54, 0.53, 0.54, 0.58, 0.66, 0.74, 0.80, 0.85, 0.89, 0.93,
                       0.96, 0.98, 1.00, 1.00, 0.99, 0.97, 0.94, 0.90, 0.84, 0.76, 0.68, 0.63),
                "AU": (0.54, 0.51, 0.50, 0.50, 0.52, 0.59, 0.70, 0.80, 0.83, 0.80, 0.77, 0.76,
                       0.75, 0.74, 0.74, 0.76, 0.82, 0.91, 0.93, 0.89, 0.81, 0.72, 0.63, 0.57),
                "W": (0.62, 0.58, 0.56, 0.56, 0.58, 0.66, 0.80, 0.92, 0.95, 0.90, 0.85, 0.82,
                      0.80, 0.78, 0.78, 0.81, 0.88, 0.98, 1.00, 0.96, 0.89, 0.80, 0.72, 0.66),
            },
        }
        for k, v in defaults.items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)


def _hours(horizon: int, dt: int, start: str) -> np.ndarray:
    t0 = datetime.strptime(start, "%H:%M")
    h0 = t0.hour + t0.minute / 60.0
    return h0 + np.arange(horizon) * dt / 60.0


def synthesize_season_profiles(seed: int = 0, horizon: int = DEFAULT_HORIZON, dt: int = DEFAULT_DT,
                               start: str = DEFAULT_START,
                               params: SynthesisParams | None = None) -> list[SeasonProfile]:
    """Representative load/PV curves for the four seasons.

    PV output ratios are averages of Beta draws centred on a clear-sky bell
    (zero outside daylight); load multipliers are averages of Normal
    perturbations around an hourly season base curve.
    """
    params = params or SynthesisParams()
    rng = np.random.default_rng(seed)
    hours = _hours(horizon, dt, start)
    out = []
    for label in SEASONS:
        rise, sset = params.sunrise[label], params.sunset[label]
        frac = np.clip((hours - rise) / (sset - rise), 0.0, 1.0)
        clear = params.pv_peak[label] * np.sin(np.pi * frac)
        clear = np.where((hours > rise) & (hours < sset), clear, 0.0)
        pv = np.zeros(horizon)
        kappa = params.beta_concentration
        for t in range(horizon):
            m = clear[t]
            if m <= 0:
                continue
            draws = rng.beta(m * kappa, (1.0 - m) * kappa, size=params.pv_samples)
            pv[t] = draws.mean()
        base_hourly = np.asarray(params.load_base[label])
        grid = np.arange(25)
        base = np.interp(hours % 24, grid, np.append(base_hourly, base_hourly[0]))
        noise = rng.normal(1.0, params.load_sigma, size=(params.load_samples, horizon)).mean(axis=0)
        load = np.maximum(base * noise, 1e-3)
        out.append(SeasonProfile(label, tuple(np.round(load, 6).tolist()),
                                 tuple(np.clip(np.round(pv, 6), 0, 1).tolist())))
    return out


def load_season_profiles(path: str | Path) -> tuple[list[SeasonProfile], int, str]:
    """Read season curves from YAML: ``{dt_minutes, start, seasons: {label: {load, pv}}}``."""
    doc = yaml.safe_load(Path(path).read_text())
    try:
        dt = int(doc.get("dt_minutes", DEFAULT_DT))
        start = str(doc.get("start", DEFAULT_START))
        profiles = [SeasonProfile(str(label), tuple(float(v) for v in body["load"]),
                                  tuple(float(v) for v in body["pv"]))
                    for label, body in doc["seasons"].items()]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValueError(f"{path}: malformed season file ({exc})") from None
    return profiles, dt, start


def dump_season_profiles(profiles: Sequence[SeasonProfile], dt: int = DEFAULT_DT,
                         start: str = DEFAULT_START) -> str:
    doc = {"dt_minutes": dt, "start": start,
           "seasons": {p.label: {"load": list(p.load_shape), "pv": list(p.pv_shape)} for p in profiles}}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def parse_outage_pmf(text: str) -> OutageDistribution:
    """``"60:0.134,120:0.429"`` or a path to a YAML mapping ``{minutes: probability}``."""
    p = Path(text)
    if p.suffix in (".yaml", ".yml") or (p.exists() and p.is_file()):
        data = yaml.safe_load(p.read_text())
        return OutageDistribution.from_mapping({int(k): float(v) for k, v in data.items()})
    pmf = {}
    for part in text.split(","):
        k, _, v = part.partition(":")
        if not v:
            raise ValueError(f"bad outage pmf entry {part!r}; expected minutes:probability")
        pmf[int(k)] = float(v)
    return OutageDistribution.from_mapping(pmf)
