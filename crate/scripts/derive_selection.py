"""Derive config/selection.toml: 50 stable insurers per line of business.

Eligible groups have every upper-triangle cell present, strictly positive net and
direct earned premium in every accident year, strictly positive cumulative paid
losses on the upper triangle and, where the lower triangle is present, a
complete non-negative rectangle. Groups are ranked by the coefficient of
variation of net earned premium plus the coefficient of variation of the
net-to-direct premium ratio; the 50 lowest scores are kept, listed in
ascending group-code order.

Usage: python scripts/derive_selection.py data/ config/selection.toml
"""
import sys

import numpy as np
import pandas as pd

FILES = {"CA": ("comauto", "C"), "PA": ("ppauto", "B"), "WC": ("wkcomp", "D"), "OL": ("othliab", "h1")}
PER_LINE = 50


def eligible_scores(df, s):
    out = []
    for code, g in df.groupby("GRCODE"):
        g = g.sort_values(["AccidentYear", "DevelopmentLag"])
        ay = g.AccidentYear.values - 1988
        lag = g.DevelopmentLag.values - 1
        upper = ay + lag <= 9
        if upper.sum() != 55:
            continue
        if len(g) not in (55, 100):
            continue
        paid = g[f"CumPaidLoss_{s}"].values.astype(float)
        if (paid[upper] <= 0).any() or (paid < 0).any():
            continue
        prem = g.groupby("AccidentYear")[f"EarnedPremNet_{s}"].first().values.astype(float)
        direct = g.groupby("AccidentYear")[f"EarnedPremDIR_{s}"].first().values.astype(float)
        if len(prem) != 10 or (prem <= 0).any() or (direct <= 0).any():
            continue
        ratio = prem / direct
        score = prem.std(ddof=1) / prem.mean() + ratio.std(ddof=1) / ratio.mean()
        out.append((score, int(code)))
    return sorted(out)


def main(datadir, target):
    lines = ["# Proxy selection: 50 groups per line ranked by net-premium stability.",
             "# Generated by scripts/derive_selection.py; edit freely.", ""]
    for line, (lob, s) in FILES.items():
        df = pd.read_csv(f"{datadir}/{lob}_pos.csv")
        picked = sorted(code for _, code in eligible_scores(df, s)[:PER_LINE])
        assert len(picked) == PER_LINE, (line, len(picked))
        body = ", ".join(f'"{c}"' for c in picked)
        lines.append(f"{line} = [{body}]")
    with open(target, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
