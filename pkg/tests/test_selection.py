import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmsc.rollout import RolloutMap
from tmsc.selection import extract_patches, nms_patch_select, random_select, select_bag, topk_select

from oracles import nms_literal


def test_worked_example():
    grid = np.array([[9, 8, 1], [7, 5, 2], [3, 4, 6]], dtype=float)
    assert nms_patch_select(grid, 2) == [(0, 9.0), (8, 6.0)]


def test_single_nonzero_and_uniform():
    grid = np.zeros((4, 4))
    grid[2, 1] = 0.3
    assert nms_patch_select(grid, 1) == [(9, 0.3)]
    assert nms_patch_select(np.full((3, 3), 0.2), 1)[0][0] == 0


def test_count_rejected():
    with pytest.raises(ValueError):
        nms_patch_select(np.ones((2, 2)), 0)
    with pytest.raises(ValueError):
        nms_patch_select(np.ones((2, 2)), 5)


def test_exhaustion_fills_smallest_unselected():
    grid = np.zeros((3, 3))
    grid[1, 1] = 1.0
    picked = [i for i, _ in nms_patch_select(grid, 4)]
    assert picked == [4, 0, 1, 2]


def test_full_selection_is_a_permutation():
    grid = np.random.default_rng(0).uniform(size=(4, 4))
    picked = [i for i, _ in nms_patch_select(grid, 16)]
    assert sorted(picked) == list(range(16))


@given(st.integers(0, 2**31), st.integers(1, 20), st.booleans())
def test_matches_literal_simulation(seed, n_h, coarse):
    rng = np.random.default_rng(seed)
    grid = rng.integers(0, 4, size=(6, 6)).astype(float) if coarse else rng.uniform(size=(6, 6))
    assert nms_patch_select(grid, n_h) == nms_literal(grid.tolist(), n_h)


@given(st.integers(0, 2**31))
def test_local_maximum_property(seed):
    grid = np.random.default_rng(seed).uniform(size=(5, 5))
    work = grid.copy()
    for idx, val in nms_patch_select(grid, 5):
        r, c = divmod(idx, 5)
        assert val == grid[r, c]
        for rr, cc in ((r, c), (r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < 5 and 0 <= cc < 5:
                work[rr, cc] = 0
        assert val >= work.max()


def test_accepts_rollout_map():
    rmap = RolloutMap(np.array([[0.1, 0.5], [0.2, 0.0]]), np.ones((2, 2), bool))
    assert nms_patch_select(rmap, 1) == [(1, 0.5)]


def test_topk_and_random():
    grid = np.array([[0.1, 0.5], [0.5, 0.0]])
    assert [i for i, _ in topk_select(grid, 3)] == [1, 2, 0]
    picks = random_select(16, 4, np.random.default_rng(0))
    assert len({i for i, _ in picks}) == 4
    assert all(a == 1 / 16 for _, a in picks)
    again = random_select(16, 4, np.random.default_rng(0))
    assert picks == again


def test_extract_patches():
    img = np.arange(64.0).reshape(8, 8)
    (tile,) = extract_patches(img, [3], 2, 4)
    np.testing.assert_array_equal(tile, img[4:, 4:])
    tiles = extract_patches(img, range(4), 2, 4)
    rebuilt = np.block([[tiles[0], tiles[1]], [tiles[2], tiles[3]]])
    assert rebuilt.tobytes() == img.tobytes()
    with pytest.raises(ValueError):
        extract_patches(img, [1, 1], 2, 4)
    with pytest.raises(IndexError):
        extract_patches(img, [4], 2, 4)
    with pytest.raises(ValueError):
        extract_patches(img, [0], 3, 4)


def test_select_bag():
    grid = np.array([[0.1, 0.9], [0.3, 0.2]])
    bag = select_bag(np.zeros((8, 8)), RolloutMap(grid, np.ones((2, 2), bool)), 2, 4)
    assert bag.indices == [1, 2] and bag.attention == [0.9, 0.3] and len(bag) == 2
