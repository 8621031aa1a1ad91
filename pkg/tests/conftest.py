import numpy as np
import pytest

from gkdmd.model import SnapshotPairs


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_pairs(rng, p, n_traj, t_prime):
    """Snapshot pairs from iid Gaussian states (no underlying dynamics)."""
    return SnapshotPairs.from_trajectories(
        [rng.normal(size=(p, t_prime)) for _ in range(n_traj)]
    )


def linear_system_pairs(rng, p, n_traj, t_prime, radius=0.95):
    """Trajectories of ``x' = L x`` with spectral radius ``radius``; returns (pairs, L)."""
    L = rng.normal(size=(p, p))
    L *= radius / np.max(np.abs(np.linalg.eigvals(L)))
    trajs = []
    for _ in range(n_traj):
        x = rng.normal(size=p)
        states = [x]
        for _ in range(t_prime - 1):
            states.append(L @ states[-1])
        trajs.append(np.array(states).T)
    return SnapshotPairs.from_trajectories(trajs), L


def same_multiset(a, b, tol):
    """Greedy matching of two complex multisets with relative tolerance."""
    a, b = list(np.asarray(a, dtype=complex)), list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return False
    for x in a:
        j = int(np.argmin([abs(x - y) for y in b]))
        if abs(x - b[j]) > tol * max(1.0, abs(x)):
            return False
        b.pop(j)
    return True
