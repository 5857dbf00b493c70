import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import EXAMPLE_A, EXAMPLE_H, EXAMPLE_REGION_ROWS, EXAMPLE_SIGMA, random_cuts
from pwacut.errors import NoChamber, TooManyCuts
from pwacut.geometry import Domain
from pwacut.partition import (
    Region,
    adjacency,
    chambers,
    chambers_export,
    facet_feasible,
    locate_chamber,
    locate_many,
    lp_feasible,
    regions,
    zaslavsky_bound,
)


def _grid(domain, n):
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(domain.lower, domain.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)


class TestLpFeasible:
    def test_no_cuts(self, cube):
        assert lp_feasible([], cube)

    def test_contradictory(self, square):
        h = np.array([0.5, 0.5])
        assert not lp_feasible([(h, "lt"), (h, "ge")], square)

    def test_example_missing_sign_vector(self, cube):
        # brute-force oracle: no grid point of the cube has side vector (0, 1, 1)
        X = _grid(cube, 81)
        bits = (X @ EXAMPLE_H.T >= 1.0).astype(int)
        assert not np.any(np.all(bits == [0, 1, 1], axis=1))
        cons = [(EXAMPLE_H[0], "lt"), (EXAMPLE_H[1], "ge"), (EXAMPLE_H[2], "ge")]
        assert not lp_feasible(cons, cube)

    def test_unknown_sense(self, square):
        with pytest.raises(ValueError):
            lp_feasible([(np.ones(2), "gt")], square)


class TestChambers:
    @pytest.mark.parametrize("method", ["tree", "sweep"])
    def test_example_sigma(self, cube, method):
        S = chambers(EXAMPLE_H, cube, method=method)
        np.testing.assert_array_equal(S, EXAMPLE_SIGMA)

    def test_single_cut(self, square):
        np.testing.assert_array_equal(chambers(np.array([[1.0, 0.0]]), square), [[0, 1]])

    def test_cut_missing_box(self, square):
        np.testing.assert_array_equal(chambers(np.array([[0.1, 0.1]]), square), [[0]])

    def test_too_many_cuts(self, square):
        H = random_cuts(np.random.default_rng(0), 21, square)
        with pytest.raises(TooManyCuts):
            chambers(H, square)

    def test_sample_witnesses_do_not_change_result(self, cube):
        rng = np.random.default_rng(1)
        X = rng.uniform(-2, 2, size=(500, 3))
        np.testing.assert_array_equal(chambers(EXAMPLE_H, cube, samples=X), EXAMPLE_SIGMA)

    @pytest.mark.parametrize("seed", range(10))
    def test_tree_matches_sweep(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 5))
        dom = Domain.from_bounds(-rng.uniform(1, 3, d), rng.uniform(1, 3, d))
        H = random_cuts(rng, int(rng.integers(1, 7)), dom)
        np.testing.assert_array_equal(chambers(H, dom, method="tree"),
                                      chambers(H, dom, method="sweep"))

    def test_identical_inputs_identical_sigma(self, cube):
        a = chambers(EXAMPLE_H.copy(), cube)
        b = chambers(EXAMPLE_H.copy(), cube)
        assert a.tobytes() == b.tobytes()


class TestAdjacencyAndRegions:
    def test_example_adjacency(self):
        np.testing.assert_array_equal(adjacency(EXAMPLE_SIGMA), EXAMPLE_A)

    def test_single_column(self):
        np.testing.assert_array_equal(adjacency([[0]]), [[0]])

    def test_two_chambers(self):
        np.testing.assert_array_equal(adjacency([[0, 1]]), [[0, 1], [1, 0]])

    def test_example_regions(self):
        regs, A, P = regions(EXAMPLE_H, EXAMPLE_SIGMA)
        assert P == 5
        np.testing.assert_array_equal(A, EXAMPLE_A)
        for reg, rows in zip(regs, EXAMPLE_REGION_ROWS):
            G, _ = reg.inequalities(EXAMPLE_H)
            np.testing.assert_allclose(G, rows)
        assert regs[2].halfspaces == ((2, 1),)
        assert regs[0].halfspaces == ((1, 0), (2, 0), (3, 0))

    def test_one_cut_regions(self):
        regs, _, _ = regions(np.array([[1.0, 0.0]]), np.array([[0, 1]]))
        assert [r.halfspaces for r in regs] == [((1, 0),), ((1, 1),)]

    def test_region_rhs(self):
        reg = Region(0, ((1, 0), (2, 1)))
        G, g = reg.inequalities(np.array([[1.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_allclose(G, [[1, 0], [0, -2]])
        np.testing.assert_allclose(g, [1, -1])

    def test_export(self):
        out = chambers_export(EXAMPLE_SIGMA, EXAMPLE_A)
        assert out == {"sigma": EXAMPLE_SIGMA.tolist(), "adjacency": EXAMPLE_A.tolist(), "P": 5}


class TestLocate:
    def test_origin(self):
        p = locate_chamber(EXAMPLE_H, EXAMPLE_SIGMA, np.zeros(3))
        # oracle: every inner product at the origin is 0 < 1
        assert EXAMPLE_SIGMA[:, p].tolist() == [0, 0, 0]

    def test_point_on_cut(self):
        assert locate_chamber(np.array([[1.0, 0.0]]), [[0, 1]], [1.0, 0.5]) == 1

    def test_vertices(self, cube):
        for v in cube.vertices():
            p = locate_chamber(EXAMPLE_H, EXAMPLE_SIGMA, v)
            assert 0 <= p < 5

    def test_strict_raises_on_unknown_vector(self):
        with pytest.raises(NoChamber):
            locate_chamber(np.array([[1.0, 0.0]]), [[0]], [1.5, 0.0], strict=True)

    def test_fallback_nearest_lowest(self):
        H = np.array([[1.0, 0.0], [0.0, 1.0]])
        S = np.array([[0, 1], [1, 0]])
        # side vector (0, 0) is at Hamming distance 1 from both: lowest index wins
        assert locate_chamber(H, S, [0.0, 0.0]) == 0

    def test_many_matches_single(self, cube):
        X = np.random.default_rng(2).uniform(-2, 2, (200, 3))
        many = locate_many(EXAMPLE_H, EXAMPLE_SIGMA, X)
        single = [locate_chamber(EXAMPLE_H, EXAMPLE_SIGMA, x) for x in X]
        assert many.tolist() == single


def _inradius(H, col, domain):
    """Chebyshev radius of a chamber (oracle for 'dense relative to volume')."""
    d = domain.dim
    sign = np.where(np.asarray(col) == 1, -1.0, 1.0)
    A = np.vstack([H * sign[:, None], np.eye(d), -np.eye(d)])
    b = np.concatenate([sign, domain.upper, -domain.lower])
    norms = np.linalg.norm(A, axis=1)
    res = linprog(np.r_[np.zeros(d), -1.0], A_ub=np.c_[A, norms], b_ub=b,
                  bounds=[(None, None)] * d + [(0, None)], method="highs")
    return -res.fun


class TestPartitionProperties:
    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(st.integers(0, 2**31 - 1), st.integers(2, 4), st.integers(1, 8))
    def test_zaslavsky_unique_location_adjacency(self, seed, d, n_c):
        rng = np.random.default_rng(seed)
        dom = Domain.from_bounds(-rng.uniform(0.5, 3, d), rng.uniform(0.5, 3, d))
        H = random_cuts(rng, n_c, dom)
        S = chambers(H, dom)
        P = S.shape[1]
        assert 1 <= P <= min(2**n_c, zaslavsky_bound(n_c, d))
        assert len({tuple(c) for c in S.T}) == P
        X = rng.uniform(dom.lower, dom.upper, size=(2000, d))
        bits = (X @ H.T >= 1.0).astype(np.int8)
        matches = (bits[:, :, None] == S[None]).all(axis=1).sum(axis=1)
        assert np.all(matches == 1)
        A = adjacency(S)
        assert np.array_equal(A, A.T) and not np.any(np.diag(A))
        for p, q in zip(*np.nonzero(np.triu(A))):
            i = A[p, q]
            assert np.sum(S[:, p] != S[:, q]) == 1 and S[i - 1, p] != S[i - 1, q]
            assert facet_feasible(H, S[:, p], i, dom)

    @pytest.mark.parametrize("seed", range(4))
    def test_dense_sampling_hits_every_chamber(self, seed):
        rng = np.random.default_rng(100 + seed)
        d = 2 + seed % 2
        dom = Domain.from_bounds([-1.0] * d, [1.0] * d)
        H = random_cuts(rng, 6, dom)
        S = chambers(H, dom)
        X = rng.uniform(dom.lower, dom.upper, size=(10**6, d))
        counts = np.bincount(locate_many(H, S, X), minlength=S.shape[1])
        spacing = (2.0**d / len(X)) ** (1.0 / d)
        for p in np.flatnonzero(counts == 0):
            # only slivers thinner than the sample spacing may go unhit
            assert _inradius(H, S[:, p], dom) < spacing

    def test_zaslavsky_values(self):
        assert zaslavsky_bound(3, 2) == 7
        assert zaslavsky_bound(2, 3) == 4
        assert zaslavsky_bound(8, 4) == 1 + 8 + 28 + 56 + 70

    def test_brute_force_sign_vectors(self, cube):
        # every side vector seen on a fine grid is a column, and vice versa
        X = _grid(cube, 61)
        seen = {tuple(b) for b in (X @ EXAMPLE_H.T >= 1.0).astype(int)}
        assert seen == {tuple(c) for c in EXAMPLE_SIGMA.T}

    def test_all_binary_strings_bound(self):
        for n_c, d in itertools.product(range(1, 6), range(1, 5)):
            assert zaslavsky_bound(n_c, d) <= 2**n_c
