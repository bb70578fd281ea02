"""Independent high-precision reference for ANOVA, Kruskal-Wallis and Welch.

Everything here is computed in mpmath at 50 digits from textbook formulas,
sharing no code with the package.
"""

import mpmath as mp

mp.mp.dps = 50


def _mean(xs):
    return mp.fsum(xs) / len(xs)


def anova(groups):
    groups = [[mp.mpf(repr(x)) for x in g] for g in groups]
    allx = [x for g in groups for x in g]
    n, k = len(allx), len(groups)
    grand = _mean(allx)
    ssb = mp.fsum(len(g) * (_mean(g) - grand) ** 2 for g in groups)
    ssw = mp.fsum(mp.fsum((x - _mean(g)) ** 2 for x in g) for g in groups)
    d1, d2 = k - 1, n - k
    f = (ssb / d1) / (ssw / d2)
    # P(F > f) = I_{d2/(d2+d1 f)}(d2/2, d1/2)
    p = mp.betainc(mp.mpf(d2) / 2, mp.mpf(d1) / 2, 0, d2 / (d2 + d1 * f), regularized=True)
    return f, p


def kruskal(groups):
    groups = [[mp.mpf(repr(x)) for x in g] for g in groups]
    allx = sorted(x for g in groups for x in g)
    n = len(allx)
    rank = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and allx[j + 1] == allx[i]:
            j += 1
        rank[allx[i]] = mp.mpf(i + j) / 2 + 1
        i = j + 1
    h = mp.mpf(12) / (n * (n + 1)) * mp.fsum(mp.fsum(rank[x] for x in g) ** 2 / len(g) for g in groups) - 3 * (n + 1)
    counts = {}
    for x in allx:
        counts[x] = counts.get(x, 0) + 1
    c = 1 - mp.fsum(mp.mpf(t) ** 3 - t for t in counts.values()) / (mp.mpf(n) ** 3 - n)
    h = h / c
    p = mp.gammainc(mp.mpf(len(groups) - 1) / 2, h / 2, mp.inf, regularized=True)
    return h, p


def welch(a, b):
    a = [mp.mpf(repr(x)) for x in a]
    b = [mp.mpf(repr(x)) for x in b]
    va = mp.fsum((x - _mean(a)) ** 2 for x in a) / (len(a) - 1)
    vb = mp.fsum((x - _mean(b)) ** 2 for x in b) / (len(b) - 1)
    sa, sb = va / len(a), vb / len(b)
    t = (_mean(a) - _mean(b)) / mp.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    return t, df, p
