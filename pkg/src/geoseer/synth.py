"""Synthetic check-in corpora with planted geographic, sequential and weekly structure.

POIs are split into geographic clusters (tight disks whose centers sit on a
grid).  Each user has one weekday cluster and one weekend cluster; with
``typed_regions`` the first half of the clusters serves weekdays only and the
second half weekends only, so weekday sequences never draw from a weekend
cluster.  ``activity`` is the chance that a user-day has check-ins.  On an
active day the user visits 2-5 distinct POIs of the cluster matching the
day's temporal state; each visit is swapped for a uniformly random POI with
probability ``noise``.  Inside a cluster POI popularity follows a Zipf law
shared by all users, jittered per user, so users agree on the popular places
but each also has personal favorites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .checkins import SECONDS_PER_DAY, Checkin, TemporalState, day_key, temporal_state

KM_PER_DEG_LAT = 111.195


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    users: int = 200
    pois: int = 300
    clusters: int = 8
    days: int = 120
    noise: float = 0.2
    activity: float = 0.3
    radius_km: float = 3.0
    spacing_km: float = 40.0
    zipf: float = 1.0
    user_jitter: float = 1.0
    typed_regions: bool = True
    seed: int = 0
    start: str = "2011-01-01"
    origin: tuple[float, float] = (40.70, -74.00)

    def validate(self) -> None:
        if min(self.users, self.pois, self.clusters, self.days) < 1:
            raise SynthConfigError("users, pois, clusters and days must be >= 1")
        if self.pois < self.clusters * 5:
            raise SynthConfigError("need at least 5 POIs per cluster")
        if not 0.0 <= self.noise <= 1.0 or not 0.0 < self.activity <= 1.0:
            raise SynthConfigError("noise must be in [0,1] and activity in (0,1]")
        if self.radius_km <= 0 or self.radius_km >= self.spacing_km / 2:
            raise SynthConfigError("cluster radius must be positive and below half the cluster spacing")


@dataclass
class SynthCorpus:
    checkins: list[Checkin]
    poi_cluster: dict[str, int]
    weekday_cluster: dict[str, int]
    weekend_cluster: dict[str, int]
    poi_coords: dict[str, tuple[float, float]] = field(repr=False)
    noise_flags: list[bool] = field(repr=False, default_factory=list)


def _offset(lat0, lon0, dx_km, dy_km):
    lat = lat0 + dy_km / KM_PER_DEG_LAT
    lon = lon0 + dx_km / (KM_PER_DEG_LAT * math.cos(math.radians(lat0)))
    return lat, lon


def generate(cfg: SynthConfig) -> SynthCorpus:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    cols = math.ceil(math.sqrt(cfg.clusters))
    centers = [_offset(*cfg.origin, (c % cols) * cfg.spacing_km, (c // cols) * cfg.spacing_km)
               for c in range(cfg.clusters)]

    poi_ids = [f"p{j:04d}" for j in range(cfg.pois)]
    poi_cluster = {p: j % cfg.clusters for j, p in enumerate(poi_ids)}
    members = [[j for j in range(cfg.pois) if j % cfg.clusters == c] for c in range(cfg.clusters)]
    coords = {}
    for j, p in enumerate(poi_ids):
        r = cfg.radius_km * math.sqrt(rng.random())
        theta = 2 * math.pi * rng.random()
        lat, lon = _offset(*centers[poi_cluster[p]], r * math.cos(theta), r * math.sin(theta))
        coords[p] = (round(lat, 6), round(lon, 6))

    base_weight = []
    for c in range(cfg.clusters):
        ranks = rng.permutation(len(members[c])) + 1
        base_weight.append(ranks.astype(float) ** -cfg.zipf)

    user_ids = [f"u{i:04d}" for i in range(cfg.users)]
    wd_cluster, we_cluster, prefs = {}, {}, {}
    for u in user_ids:
        if cfg.typed_regions and cfg.clusters >= 2:
            half = cfg.clusters // 2
            wd = int(rng.integers(half))
            we = int(half + rng.integers(cfg.clusters - half))
        else:
            wd = int(rng.integers(cfg.clusters))
            we = wd if cfg.clusters == 1 else int((wd + 1 + rng.integers(cfg.clusters - 1)) % cfg.clusters)
        wd_cluster[u], we_cluster[u] = wd, we
        prefs[u] = {}
        for c in {wd, we}:
            w = base_weight[c] * rng.lognormal(0.0, cfg.user_jitter, len(members[c]))
            prefs[u][c] = w / w.sum()

    start = datetime.fromisoformat(cfg.start).replace(tzinfo=timezone.utc)
    first_day = day_key(int(start.timestamp()))
    checkins, flags = [], []
    for u in user_ids:
        for day in range(first_day, first_day + cfg.days):
            if rng.random() >= cfg.activity:
                continue
            state = temporal_state(day)
            c = we_cluster[u] if state is TemporalState.WEEKEND else wd_cluster[u]
            pool = members[c]
            length = int(rng.integers(2, 6))
            picks = rng.choice(len(pool), size=min(length, len(pool)), replace=False, p=prefs[u][c])
            hour = 10.0 if state is TemporalState.WEEKEND else 7.0
            hour += 3.0 * rng.random()
            for pick in picks:
                noisy = rng.random() < cfg.noise
                j = int(rng.integers(cfg.pois)) if noisy else pool[pick]
                ts = day * SECONDS_PER_DAY + int(hour * 3600)
                p = poi_ids[j]
                checkins.append(Checkin(u, p, coords[p][0], coords[p][1], ts))
                flags.append(noisy)
                hour = min(hour + 0.5 + 2.0 * rng.random(), 23.9)
    return SynthCorpus(checkins, poi_cluster, wd_cluster, we_cluster, coords, flags)
