"""Self-contained descriptive statistics and significance tests.

Tail probabilities come from the regularised incomplete beta function
(modified Lentz continued fraction) and the regularised upper incomplete
gamma function (series / continued fraction), so results do not depend on
whichever scientific stack happens to be installed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InsufficientDataError, UndefinedStatisticError

ALPHA = 0.05
_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


# --- special functions ------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def gammaincc(a: float, x: float) -> float:
    """Regularised upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0.0:
        return 1.0
    log_front = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                return max(0.0, 1.0 - total * math.exp(log_front))
        raise ArithmeticError("incomplete gamma series did not converge")
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(log_front) * h
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F distribution."""
    if f <= 0:
        return 1.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def chi2_sf(x: float, k: float) -> float:
    return gammaincc(k / 2.0, x / 2.0)


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


# --- descriptive ---------------------------------------------------------


def mean(xs: Sequence[float]) -> float:
    if not xs:
        raise InsufficientDataError("mean of an empty sample")
    return math.fsum(xs) / len(xs)


def variance(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        raise InsufficientDataError("sample variance needs at least two values")
    m = mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def sd(xs: Sequence[float]) -> float:
    return math.sqrt(variance(xs))


def median(xs: Sequence[float]) -> float:
    if not xs:
        raise InsufficientDataError("median of an empty sample")
    s = sorted(xs)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2.0


def describe(xs: Sequence[float]) -> dict:
    n = len(xs)
    return {
        "n": n,
        "mean": mean(xs) if n else None,
        "sd": sd(xs) if n >= 2 else None,
    }


# --- tests ------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    p_value: float
    df: tuple[float, ...]
    groups: tuple[dict, ...] = field(default_factory=tuple)
    note: str = ""

    __test__ = False  # not a pytest class

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": list(self.df),
            "significant": self.significant,
            "groups": list(self.groups),
            **({"note": self.note} if self.note else {}),
        }


def _clip_p(p: float) -> float:
    return min(1.0, max(0.0, p))


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    if len(groups) < 2:
        raise InsufficientDataError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in groups):
        raise InsufficientDataError("every ANOVA group needs at least two samples")
    pooled = [x for g in groups for x in g]
    n = len(pooled)
    k = len(groups)
    grand = mean(pooled)
    ss_between = math.fsum(len(g) * (mean(g) - grand) ** 2 for g in groups)
    ss_within = math.fsum(math.fsum((x - mean(g)) ** 2 for x in g) for g in groups)
    df_b, df_w = k - 1, n - k
    if ss_within <= 0.0:
        raise UndefinedStatisticError("zero within-group variance: F is undefined")
    f = (ss_between / df_b) / (ss_within / df_w)
    return TestResult(
        "one_way_anova", f, _clip_p(f_sf(f, df_b, df_w)), (df_b, df_w),
        tuple(describe(list(g)) for g in groups),
    )


def rankdata(values: Sequence[float]) -> list[float]:
    """Midranks (1-based), ties share the average rank."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    if len(groups) < 2:
        raise InsufficientDataError("Kruskal-Wallis needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise InsufficientDataError("Kruskal-Wallis groups must be non-empty")
    pooled = [x for g in groups for x in g]
    n = len(pooled)
    k = len(groups)
    summaries = tuple(describe(list(g)) for g in groups)
    ranks = rankdata(pooled)
    # tie correction factor 1 - sum(t^3 - t) / (n^3 - n)
    counts: dict[float, int] = {}
    for x in pooled:
        counts[x] = counts.get(x, 0) + 1
    ties = math.fsum(t**3 - t for t in counts.values())
    correction = 1.0 - ties / (n**3 - n) if n > 1 else 0.0
    if correction <= 0.0:
        return TestResult("kruskal_wallis", 0.0, 1.0, (k - 1,), summaries, note="all values identical")
    h = 0.0
    start = 0
    for g in groups:
        r = math.fsum(ranks[start:start + len(g)])
        h += r * r / len(g)
        start += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    h = max(0.0, h / correction)
    return TestResult("kruskal_wallis", h, _clip_p(chi2_sf(h, k - 1)), (k - 1,), summaries)


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Welch's unequal-variance t-test, two-sided."""
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("each sample needs at least two values")
    va, vb = variance(a), variance(b)
    if va == 0.0 and vb == 0.0:
        raise UndefinedStatisticError("zero variance in both samples")
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    t = (mean(a) - mean(b)) / math.sqrt(se2)
    df = se2**2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    return TestResult("welch_t", t, _clip_p(t_sf_two_sided(t, df)), (df,), (describe(a), describe(b)))
