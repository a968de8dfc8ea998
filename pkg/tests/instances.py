"""Seeded LFR instances shared by the synthesis and acceptance tests."""
import numpy as np

from lowgain import lfr as L
from lowgain import synthesis as S
from lowgain.errors import Infeasible

J_CAP = 0.45


def random_lfr_instance(seed):
    """Small LFR with two sector-[0, 1] channels and ``K = pinv(F)``."""
    rng = np.random.default_rng([seed, 5])
    p = int(rng.integers(2, 4))
    m = p + int(rng.integers(0, 2))
    n_w, n_ch = 2, 2
    F = rng.standard_normal((p, m))
    G = 0.3 * rng.standard_normal((p, n_ch))
    H = 0.3 * rng.standard_normal((n_ch, m))
    J = rng.uniform(-0.3, 0.3, (n_ch, n_ch))
    J *= min(1.0, J_CAP / np.linalg.norm(J, 2))
    E1 = rng.standard_normal((p, n_w))
    E2 = 0.5 * rng.standard_normal((n_ch, n_w))
    lfr = L.make_lfr(F, G, H, J, E1, E2)
    pair = L.daug_pair(L.sector_cone(0.0, 1.0), L.sector_cone(0.0, 1.0))
    return lfr, pair, np.linalg.pinv(F)


def certified_instances(count, start=0, limit=200):
    """First ``count`` seeds whose fixed gain admits an analysis certificate."""
    out = []
    seed = start
    while len(out) < count and seed < start + limit:
        lfr, pair, K = random_lfr_instance(seed)
        try:
            an = S.robust_analysis(lfr, pair.analysis_cone, K)
        except Infeasible:
            seed += 1
            continue
        out.append((seed, lfr, pair, K, an))
        seed += 1
    return out


def sector_delta():
    return L.DeltaMap.from_channels([("sat", 1.0), ("tanh", 0.0, 1.0)])
