"""Small datasets shared across test modules."""

import numpy as np

from geoseer.checkins import Dataset
from geoseer.synth import SynthConfig, generate


def tiny_dataset(users=5, pois=10, clusters=2, days=14, seed=0, noise=0.1) -> Dataset:
    cfg = SynthConfig(users=users, pois=pois, clusters=clusters, days=days, noise=noise,
                      activity=0.6, seed=seed)
    checkins = generate(cfg).checkins
    # preference sampling needs an unvisited POI per user: drop one where a user has them all
    seen: dict[str, set[str]] = {}
    for c in checkins:
        seen.setdefault(c.user_id, set()).add(c.poi_id)
    drop = {(u, max(ps)) for u, ps in seen.items() if len(ps) == pois}
    return Dataset.from_checkins([c for c in checkins if (c.user_id, c.poi_id) not in drop])


def relative_error(a, b) -> float:
    a = np.concatenate([x.ravel() for x in a])
    b = np.concatenate([x.ravel() for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
