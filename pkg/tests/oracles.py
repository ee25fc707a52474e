"""Independent reference implementations used by the unit and acceptance tests.

Each one is written from the definition in the plainest possible way and
shares no code with the package.
"""

from fractions import Fraction


def nms_literal(grid, n_h):
    """Step-by-step simulation of non-maximum-suppression patch selection.

    ``grid`` is a list of rows. Returns [(index, value), ...].
    """
    rows, cols = len(grid), len(grid[0])
    work = [list(r) for r in grid]
    chosen = []
    for _ in range(n_h):
        best = None
        for r in range(rows):
            for c in range(cols):
                idx = r * cols + c
                if idx in [i for i, _ in chosen]:
                    continue
                if best is None or work[r][c] > work[best[0]][best[1]]:
                    best = (r, c)
        r, c = best
        chosen.append((r * cols + c, float(grid[r][c])))
        work[r][c] = 0
        if r > 0:
            work[r - 1][c] = 0
        if r < rows - 1:
            work[r + 1][c] = 0
        if c > 0:
            work[r][c - 1] = 0
        if c < cols - 1:
            work[r][c + 1] = 0
    return chosen


def otsu_exhaustive(levels):
    """Smallest 8-bit level k maximising w0 w1 (mu0 - mu1)^2 for {<= k} vs {> k}.

    ``levels`` is a flat list of integers in 0..255. Exact rational arithmetic.
    """
    n = len(levels)
    best_k, best = None, None
    for k in range(256):
        lo = [v for v in levels if v <= k]
        hi = [v for v in levels if v > k]
        if not lo or not hi:
            continue
        w0, w1 = Fraction(len(lo), n), Fraction(len(hi), n)
        mu0, mu1 = Fraction(sum(lo), len(lo)), Fraction(sum(hi), len(hi))
        score = w0 * w1 * (mu0 - mu1) ** 2
        if best is None or score > best:
            best_k, best = k, score
    return best_k


def matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def rollout_product(layers):
    """Explicit ordered product A(L-1) ... A(0) with A = (W + I) / 2."""
    t = len(layers[0])
    renorm = [[[0.5 * w[i][j] + (0.5 if i == j else 0.0) for j in range(t)] for i in range(t)] for w in layers]
    out = renorm[0]
    for a in renorm[1:]:
        out = matmul(a, out)
    return out
