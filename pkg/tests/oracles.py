"""Slow reference implementations used as independent checks."""

import math


def _dist(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def _rows(x):
    return [r if isinstance(r, (list, tuple)) else [r] for r in x]


def naive_dcov(x, y, present_x=None, prob_x=1.0):
    """Textbook double-centering with explicit loops.

    Returns ``(dcov_sq, t2, statistic)``; ``dcov_sq`` is not clamped.
    """
    x, y = _rows(x), _rows(y)
    n = len(x)
    px = present_x or [True] * n

    def weighted(rows, present, prob):
        return [[_dist(rows[i], rows[j]) * (present[i] and present[j]) / (prob * prob)
                 for j in range(n)] for i in range(n)]

    def center(a):
        row = [sum(a[i]) / n for i in range(n)]
        col = [sum(a[i][j] for i in range(n)) / n for j in range(n)]
        grand = sum(row) / n
        return [[a[i][j] - row[i] - col[j] + grand for j in range(n)] for i in range(n)], grand

    a = weighted(x, px, prob_x)
    b = weighted(y, [True] * n, 1.0)
    A, ma = center(a)
    B, mb = center(b)
    dcov_sq = sum(A[i][j] * B[i][j] for i in range(n) for j in range(n)) / (n * n)
    t2 = ma * mb
    return dcov_sq, t2, n * dcov_sq / t2


def step_up_qvalues(p, pi0=1.0):
    """q_(i) = min_{j >= i} pi0 m p_(j) / j by brute force."""
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    rank = {idx: r + 1 for r, idx in enumerate(order)}
    q = []
    for i in range(m):
        r = rank[i]
        q.append(min(1.0, min(pi0 * m * p[order[j - 1]] / j for j in range(r, m + 1))))
    return q
