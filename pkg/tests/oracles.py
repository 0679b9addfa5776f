"""Independent reference computations used by the tests.

Nothing here calls into the code paths it is used to check.
"""

import itertools
import math

import numpy as np


def naive_trace(events, x, t):
    """Backward trace by linear scans over a plain list of ``(time, a, b)`` events."""
    cur, bound, first = x, t, True
    while True:
        cands = [
            (s, b if a == cur else a)
            for s, a, b in events
            if cur in (a, b) and (s <= bound if first else s < bound)
        ]
        if not cands:
            return cur
        bound, cur = max(cands)
        first = False


def forward_stirring(events, sigma, t):
    """Swap occupations at every event up to ``t`` in time order."""
    eta = list(sigma)
    for s, a, b in sorted(events):
        if s > t:
            break
        eta[a], eta[b] = eta[b], eta[a]
    return eta


def two_state_stay(rate, t):
    """``P(a -> a)`` for a walk on two sites joined by one rate-``rate`` edge."""
    return (1 + math.exp(-2 * rate * t)) / 2


def cluster_law_bruteforce(n, pairs, probs, origin):
    """Exact law of the origin-cluster size by enumerating all open-edge subsets."""
    law = {}
    for mask in itertools.product((0, 1), repeat=len(pairs)):
        weight = 1.0
        adj = {v: set() for v in range(n)}
        for bit, (a, b), p in zip(mask, pairs, probs):
            weight *= p if bit else 1 - p
            if bit:
                adj[a].add(b)
                adj[b].add(a)
        seen, stack = {origin}, [origin]
        while stack:
            v = stack.pop()
            for w in adj[v] - seen:
                seen.add(w)
                stack.append(w)
        law[len(seen)] = law.get(len(seen), 0.0) + weight
    return law


def sep_generator_sum(rates, F, eta):
    """Direct exclusion-generator sum over ordered pairs for a function ``F`` on tuples."""
    n = len(eta)
    total = 0.0
    for x in range(n):
        for y in range(n):
            c = rates[x][y]
            if x != y and c and eta[x] == 1 and eta[y] == 0:
                other = list(eta)
                other[x], other[y] = other[y], other[x]
                total += c * (F(tuple(other)) - F(tuple(eta)))
    return total


def total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
