"""Regenerate stats_fixtures.json from the mpmath reference.

    python3 tests/data/make_stats_fixtures.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
import mp_reference as ref  # noqa: E402

rng = np.random.default_rng(20240611)


def r(xs):
    return [round(float(x), 6) for x in xs]


fixtures = []
# ANOVA: balanced, unbalanced, tiny effect, large effect
fixtures.append({"test": "anova", "groups": [[1, 2], [5, 6]]})
fixtures.append({"test": "anova", "groups": [r(rng.normal(0.40, 0.1, 12)), r(rng.normal(0.42, 0.1, 15)), r(rng.normal(0.45, 0.1, 9))]})
fixtures.append({"test": "anova", "groups": [r(rng.normal(3.0, 1.0, 30)), r(rng.normal(3.1, 1.2, 30)), r(rng.normal(2.9, 0.8, 30)), r(rng.normal(3.0, 1.0, 30))]})
fixtures.append({"test": "anova", "groups": [r(rng.normal(0.0, 1.0, 8)), r(rng.normal(3.0, 1.0, 8))]})
# Kruskal-Wallis: textbook, ties, four groups
fixtures.append({"test": "kruskal", "groups": [[1, 2, 3], [4, 5, 6]]})
fixtures.append({"test": "kruskal", "groups": [[1, 2, 2, 3, 5], [2, 3, 3, 4, 6, 7], [5, 5, 6, 8]]})
fixtures.append({"test": "kruskal", "groups": [r(rng.uniform(0.2, 0.6, 18)), r(rng.uniform(0.2, 0.6, 15)), r(rng.uniform(0.2, 0.6, 15)), r(rng.uniform(0.25, 0.6, 9))]})
# Welch: equal n, unequal variance, near-degenerate
fixtures.append({"test": "welch", "a": r(rng.normal(0.79, 0.03, 50)), "b": r(rng.normal(0.21, 0.02, 50))})
fixtures.append({"test": "welch", "a": r(rng.normal(10, 1, 7)), "b": r(rng.normal(11, 4, 13))})
fixtures.append({"test": "welch", "a": [1.0, 1.0, 1.0, 1.0000001], "b": [2.0, 2.0, 2.0, 2.0000001]})

for fx in fixtures:
    if fx["test"] == "anova":
        f, p = ref.anova(fx["groups"])
        fx["expected"] = {"statistic": str(f), "p_value": str(p)}
    elif fx["test"] == "kruskal":
        h, p = ref.kruskal(fx["groups"])
        fx["expected"] = {"statistic": str(h), "p_value": str(p)}
    else:
        t, df, p = ref.welch(fx["a"], fx["b"])
        fx["expected"] = {"statistic": str(t), "df": str(df), "p_value": str(p)}

out = Path(__file__).with_name("stats_fixtures.json")
out.write_text(json.dumps(fixtures, indent=1) + "\n")
print(f"wrote {len(fixtures)} fixtures to {out}")
