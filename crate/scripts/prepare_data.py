#!/usr/bin/env python3
"""Build the preprocessed benchmark CSVs under data/.

Sources are the KEEL copies of the UCI datasets (pip package `keel-ds`) and
the R MASS copy of Boston housing (pip package `pydataset`). The output
format is what the `ekm` loader expects: a header row, numeric feature
columns, and a numeric class column in the last position.

Preprocessing applied:
  bcw  Wisconsin breast cancer: id column and rows with missing values were
       already dropped in the KEEL copy (683 rows remain); labels kept as
       2 (benign) / 4 (malignant).
  bld  BUPA liver disorders: the selector column is used as the class,
       1 / 2 as distributed.
  pid  Pima Indians diabetes: labels mapped tested_negative -> 0,
       tested_positive -> 1.
  cmc  Contraceptive method choice: used as distributed, classes 1 / 2 / 3.
  ion  Ionosphere: labels mapped b -> 0, g -> 1. Note the KEEL copy has 33
       features: the constant second column of the UCI original is removed.
  bos  Boston housing: the continuous target medv is binned into 3 classes
       at 18.77 and 23.74 (terciles), giving a 33/34/33 split.

Run from the repository root:  python3 scripts/prepare_data.py
"""

import os

KEEL_RAW = None
for cand in [
    os.path.expanduser("~/.local/lib"),
    "/usr/local/lib",
    "/usr/lib",
]:
    for root, dirs, files in os.walk(cand):
        if root.endswith("keel_ds/data/balanced/raw"):
            KEEL_RAW = root
            break
    if KEEL_RAW:
        break

OUT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def read_keel(name):
    rows = []
    with open(os.path.join(KEEL_RAW, name + ".dat")) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            rows.append([tok.strip() for tok in line.split(",")])
    return rows


def write_csv(name, header, rows):
    os.makedirs(OUT, exist_ok=True)
    path = os.path.join(OUT, name + ".csv")
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")
    print(f"wrote {path}: {len(rows)} rows x {len(header)} cols")


def feat_header(d):
    return [f"f{i+1}" for i in range(d)]


def main():
    if KEEL_RAW is None:
        raise SystemExit("keel_ds package not found; pip install keel-ds")

    # bcw: 683 x 9, labels 2/4
    rows = read_keel("wisconsin")
    write_csv("bcw", feat_header(9) + ["class"], rows)

    # bld: 345 x 6, labels 1/2
    rows = read_keel("bupa")
    write_csv("bld", feat_header(6) + ["class"], rows)

    # pid: 768 x 8, labels 0/1
    rows = read_keel("pima")
    lab = {"tested_negative": "0", "tested_positive": "1"}
    rows = [r[:-1] + [lab[r[-1]]] for r in rows]
    write_csv("pid", feat_header(8) + ["class"], rows)

    # cmc: 1473 x 9, labels 1/2/3
    rows = read_keel("contraceptive")
    write_csv("cmc", feat_header(9) + ["class"], rows)

    # ion: 351 x 33 (KEEL drops the constant column), labels b->0 / g->1
    rows = read_keel("ionosphere")
    lab = {"b": "0", "g": "1"}
    rows = [r[:-1] + [lab[r[-1]]] for r in rows]
    write_csv("ion", feat_header(33) + ["class"], rows)

    # bos: 506 x 13, medv binned at 18.77 / 23.74
    from pydataset import data

    df = data("Boston")
    feats = [c for c in df.columns if c != "medv"]
    rows = []
    for _, r in df.iterrows():
        v = r["medv"]
        cls = "0" if v < 18.77 else ("1" if v <= 23.74 else "2")
        rows.append([repr(float(r[c])) for c in feats] + [cls])
    write_csv("bos", feats + ["class"], rows)


if __name__ == "__main__":
    main()
