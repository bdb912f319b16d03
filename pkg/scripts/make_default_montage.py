"""Regenerate the packaged default 10-20/10-10 montage JSON.

Positions are a schematic head-circle layout, good enough for topographic
scatter plots: rows run front (+y) to back (-y), electrode numbers place
channels laterally (odd left, even right), and each row is squeezed to fit
the unit circle.  Regions follow the engine's channel-prefix rule.
"""

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from eegalign.data_model import region_for_channel

ROW_Y = {
    "Fp": 0.85, "AF": 0.68, "F": 0.50, "FT": 0.25, "FC": 0.25,
    "T": 0.0, "C": 0.0, "TP": -0.25, "CP": -0.25,
    "P": -0.50, "PO": -0.68, "O": -0.85,
}

CHANNELS = (
    ["Fp1", "Fpz", "Fp2"]
    + ["AF7", "AF3", "AFz", "AF4", "AF8"]
    + ["F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8"]
    + ["FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8"]
    + ["T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"]
    + ["TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8"]
    + ["P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8"]
    + ["PO7", "PO3", "POz", "PO4", "PO8"]
    + ["O1", "Oz", "O2"]
)


def split_name(name):
    row = "".join(ch for ch in name if ch.isalpha() and ch != "z")
    num = "".join(ch for ch in name if ch.isdigit())
    return row, (int(num) if num else 0)


def position(name):
    row, num = split_name(name)
    y = ROW_Y[row]
    if num == 0:
        return 0.0, y
    side = -1.0 if num % 2 == 1 else 1.0
    lateral = (num + 1) // 2
    halfwidth = math.sqrt(max(0.0, 1.0 - y * y))
    return side * lateral / 5.0 * halfwidth, y


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "eegalign" / "data" / "montage_10_20.json"
    channels = {}
    for name in CHANNELS:
        x, y = position(name)
        channels[name] = {"x": round(x, 4), "y": round(y, 4),
                          "region": region_for_channel(name)}
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"version": "1", "channels": channels}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out} ({len(channels)} channels)")


if __name__ == "__main__":
    main()
