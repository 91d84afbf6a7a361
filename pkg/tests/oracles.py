"""Independent reference computations used as test oracles.

Everything here is brute force over exact integers and deliberately shares
no code with the package.
"""

import itertools
import math

import numpy as np


def exact_modl_cost(part_counts, n_total=None):
    """MODL cost of consecutive parts, from exact integer combinatorics."""
    part_counts = [list(map(int, c)) for c in part_counts]
    C = len(part_counts[0])
    n_obs = sum(sum(c) for c in part_counts)
    N = n_obs if n_total is None else n_total
    I = len(part_counts)
    cost = math.log(N) + math.log(math.comb(n_obs + I - 1, I - 1))
    for c in part_counts:
        n = sum(c)
        multinomial = math.factorial(n)
        for v in c:
            multinomial //= math.factorial(v)
        cost += math.log(math.comb(n + C - 1, C - 1)) + math.log(multinomial)
    return cost


def exhaustive_discretization(values, labels, C):
    """Minimum MODL cost over every ordered partition of the distinct values."""
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    distinct = sorted(set(values.tolist()))
    per_value = [[int(np.sum((values == v) & (labels == z))) for z in range(C)] for v in distinct]
    m = len(distinct)
    best = math.inf
    for cuts in itertools.product([False, True], repeat=m - 1):
        parts, cur = [], list(per_value[0])
        for i, cut in enumerate(cuts, start=1):
            if cut:
                parts.append(cur)
                cur = list(per_value[i])
            else:
                cur = [a + b for a, b in zip(cur, per_value[i])]
        parts.append(cur)
        best = min(best, exact_modl_cost(parts))
    return best


def shapley_by_coalitions(value_fn, n_players):
    """Exact Shapley values by enumerating all coalitions."""
    phi = np.zeros(n_players)
    fact = math.factorial
    for j in range(n_players):
        others = [k for k in range(n_players) if k != j]
        for size in range(n_players):
            weight = fact(size) * fact(n_players - size - 1) / fact(n_players)
            for coalition in itertools.combinations(others, size):
                s = set(coalition)
                phi[j] += weight * (value_fn(s | {j}) - value_fn(s))
    return phi


def trapezoid_auc(scores, positive):
    """ROC area by sweeping thresholds and integrating with the trapezoid rule."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    P, Nn = positive.sum(), (~positive).sum()
    tpr, fpr = [0.0], [0.0]
    for t in sorted(set(scores.tolist()), reverse=True):
        sel = scores >= t
        tpr.append((sel & positive).sum() / P)
        fpr.append((sel & ~positive).sum() / Nn)
    area = 0.0
    for i in range(1, len(tpr)):
        area += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2
    return area


def threshold_auc(values, positive):
    """AUC of ``-values`` as a score (lower value = more positive), by pair counting."""
    values = np.asarray(values, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    pos, neg = -values[positive], -values[~positive]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))
