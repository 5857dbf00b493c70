import numpy as np
import pytest

from pwacut.geometry import Domain

# three cuts of the cube [-2, 2]^3 used throughout the partition tests
EXAMPLE_H = np.array([
    [-1.0, 2.0, 5.0],
    [0.1, -0.5, -0.2],
    [-1.0, 1.0, 0.0],
])
EXAMPLE_SIGMA = np.array([
    [0, 0, 0, 1, 1],
    [0, 0, 1, 0, 0],
    [0, 1, 0, 0, 1],
])
EXAMPLE_A = np.array([
    [0, 3, 2, 1, 0],
    [3, 0, 0, 0, 1],
    [2, 0, 0, 0, 0],
    [1, 0, 0, 0, 3],
    [0, 1, 0, 3, 0],
])
# printed inequality rows G of each region {x | G x <= 1}
EXAMPLE_REGION_ROWS = [
    [[-1, 2, 5], [0.1, -0.5, -0.2], [-1, 1, 0]],
    [[-1, 2, 5], [1, -1, 0]],
    [[-0.1, 0.5, 0.2]],
    [[1, -2, -5], [-1, 1, 0]],
    [[1, -2, -5], [1, -1, 0]],
]


@pytest.fixture
def cube():
    return Domain.from_bounds([-2.0] * 3, [2.0] * 3)


@pytest.fixture
def square():
    return Domain.from_bounds([-2.0, -2.0], [2.0, 2.0])


def random_cuts(rng, n_c, domain, inside=True):
    """Hyperplanes through random interior points, so they actually cut the box."""
    d = domain.dim
    H = []
    while len(H) < n_c:
        normal = rng.normal(size=d)
        normal /= np.linalg.norm(normal)
        anchor = rng.uniform(0.8 * domain.lower, 0.8 * domain.upper) if inside else \
            rng.uniform(domain.lower, domain.upper)
        offset = normal @ anchor
        if abs(offset) < 1e-3:
            continue
        H.append(normal / offset)
    return np.array(H)


def fitted_model(H, domain, func, continuity=False, N=3000, seed=0):
    """Partition + fit for explicit hyperplanes, packaged as a model."""
    from pwacut.fitting import fit_continuous, fit_unconstrained, sample_domain
    from pwacut.model import PwaModel
    from pwacut.partition import chambers, locate_many, regions

    H = np.asarray(H, dtype=float).reshape(-1, domain.dim)
    samples = sample_domain(domain, N, seed, func)
    S = chambers(H, domain)
    regs, A, P = regions(H, S)
    assign = locate_many(H, S, samples.points)
    if continuity:
        fit = fit_continuous(samples, regs, A, H, assign, domain)
    else:
        fit = fit_unconstrained(samples, P, assign, domain)
    meta = {"seed": seed, "nc": len(H), "P": P, "gamma": fit.gamma,
            "max_rel_err": fit.max_rel_err}
    return PwaModel(domain, H, S, A, regs, fit.modes, continuity, meta), samples, assign
