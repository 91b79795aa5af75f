"""Rebuild data/*.csv from copies of the CAS Loss Reserve Database shipped in PyPI wheels.

CA, PA and OL come from trikit's ``lrdb.csv`` (full 10x10 rectangles). Its paid
column for workers' compensation holds incurred losses, so WC is taken from
chainladder's ``clrd.csv``, which carries the upper triangle only.

Usage:
    pip download trikit==0.3.6 chainladder==0.10.1 --no-deps -d /tmp/wheels
    python scripts/assemble_cas_data.py /tmp/wheels data/
"""
import glob
import io
import sys
import zipfile

import pandas as pd

SUFFIX = {"comauto": "C", "ppauto": "B", "wkcomp": "D", "othliab": "h1"}


def read_from_wheel(pattern, member):
    wheel = glob.glob(pattern)[0]
    with zipfile.ZipFile(wheel) as z:
        return pd.read_csv(io.BytesIO(z.read(member)))


def cas_frame(df, lob):
    s = SUFFIX[lob]
    out = pd.DataFrame(
        {
            "GRCODE": df["GRCODE"],
            "GRNAME": df["GRNAME"],
            "AccidentYear": df["AccidentYear"],
            "DevelopmentYear": df["AccidentYear"] + df["DevelopmentLag"] - 1,
            "DevelopmentLag": df["DevelopmentLag"],
            f"IncurLoss_{s}": df["IncurLoss"],
            f"CumPaidLoss_{s}": df["CumPaidLoss"],
            f"BulkLoss_{s}": df["BulkLoss"],
            f"EarnedPremDIR_{s}": df["EarnedPremDIR"],
            f"EarnedPremCeded_{s}": df["EarnedPremCeded"],
            f"EarnedPremNet_{s}": df["EarnedPremNet"],
            "Single": df["Single"],
            f"PostedReserve97_{s}": df["PostedReserve97"],
        }
    )
    return out.sort_values(["GRCODE", "AccidentYear", "DevelopmentLag"])


def main(wheels, outdir):
    lrdb = read_from_wheel(f"{wheels}/trikit-*.whl", "trikit/datasets/lrdb.csv")
    clrd = read_from_wheel(f"{wheels}/chainladder-*.whl", "chainladder/utils/data/clrd.csv")
    for lob in ["comauto", "ppauto", "othliab"]:
        t = lrdb[lrdb.loss_key == lob]
        df = pd.DataFrame(
            {
                "GRCODE": t.grcode,
                "GRNAME": t.grname,
                "AccidentYear": t.origin,
                "DevelopmentLag": t.dev,
                "IncurLoss": t.incrd_loss,
                "CumPaidLoss": t.paid_loss,
                "BulkLoss": 0,
                "EarnedPremDIR": t.ep_direct,
                "EarnedPremCeded": t.ep_ceded,
                "EarnedPremNet": t.ep_net,
                "Single": t.single,
                "PostedReserve97": t.posted_reserve_97,
            }
        )
        # cross-check the upper triangle against the independent clrd copy
        c = clrd[clrd.LOB == lob]
        m = df.merge(c, on=["GRCODE", "AccidentYear", "DevelopmentLag"], suffixes=("", "_c"))
        assert (m.CumPaidLoss == m.CumPaidLoss_c).all(), lob
        assert (m.EarnedPremNet == m.EarnedPremNet_c).all(), lob
        df["BulkLoss"] = df.merge(
            c[["GRCODE", "AccidentYear", "DevelopmentLag", "BulkLoss"]],
            on=["GRCODE", "AccidentYear", "DevelopmentLag"],
            how="left",
            suffixes=("_x", ""),
        )["BulkLoss"].fillna(0).astype(int).values
        cas_frame(df, lob).to_csv(f"{outdir}/{lob}_pos.csv", index=False)
    wc = clrd[clrd.LOB == "wkcomp"]
    cas_frame(wc, "wkcomp").to_csv(f"{outdir}/wkcomp_pos.csv", index=False)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
