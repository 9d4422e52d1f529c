"""Write the breast cancer diagnostic table in the UCI wdbc.data layout.

Columns: id, diagnosis (M or B), then the 30 real-valued measurements. The
copy bundled with scikit-learn has no sample ids, so the row number is used.
"""

import argparse
from pathlib import Path

from sklearn.datasets import load_breast_cancer


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", nargs="?", default="data/wdbc.data", type=Path)
    args = parser.parse_args()

    bunch = load_breast_cancer()
    lines = []
    for i, (row, target) in enumerate(zip(bunch.data, bunch.target)):
        # scikit-learn codes malignant as 0 and benign as 1.
        label = "M" if target == 0 else "B"
        values = ",".join(repr(float(x)) for x in row)
        lines.append(f"{i + 1},{label},{values}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} rows to {args.out}")


if __name__ == "__main__":
    main()
