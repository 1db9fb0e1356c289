#!/usr/bin/env python3
# Copyright 2026 The steer Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Plot gains.csv / covariance.csv / paths.csv from a steer output directory."""

import argparse
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("directory")
    ap.add_argument("--paths", type=int, default=50, help="paths to draw")
    ap.add_argument("--output", default=None, help="image file (default DIR/plots.png)")
    args = ap.parse_args()
    d = args.directory

    panels = [f for f in ("gains.csv", "covariance.csv", "paths.csv") if os.path.exists(os.path.join(d, f))]
    if not panels:
        raise SystemExit("no result tables in " + d)
    fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4), squeeze=False)
    for ax, name in zip(axes[0], panels):
        df = pd.read_csv(os.path.join(d, name))
        if name == "paths.csv":
            for pid, g in df.groupby("path_id"):
                if pid >= args.paths:
                    break
                if "x2" in g:
                    ax.plot(g["x1"], g["x2"], lw=0.5)
                else:
                    ax.plot(g["t"], g["x1"], lw=0.5)
            ax.set_xlabel("x1" if "x2" in df else "t")
            ax.set_ylabel("x2" if "x2" in df else "x1")
        else:
            for c in df.columns[1:]:
                ax.plot(df["t"], df[c], label=c)
            ax.set_xlabel("t")
            ax.legend()
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(args.output or os.path.join(d, "plots.png"), dpi=120)


if __name__ == "__main__":
    main()
