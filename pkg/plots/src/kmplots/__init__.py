"""Render iteration/time curves from solver sweep CSVs.

Input is the benchmark harness's CSV schema
(method,m,n,beta,eta,beta_j,seed,trial,iterations,cpu_time_s,final_res,termination);
one line per method, median over trials at each x value. Rendering is a pure
function of the CSV bytes: the style profile is pinned so re-rendering the
same file reproduces the image pixel for pixel.

    plots sweep.csv --x beta --y iterations --out fig.png
"""

import argparse
import csv
import sys
from dataclasses import dataclass
from statistics import median

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

X_AXES = ("beta", "m", "n")
Y_AXES = ("iterations", "cpu_time_s")

EXPECTED_COLUMNS = [
    "method", "m", "n", "beta", "eta", "beta_j", "seed", "trial",
    "iterations", "cpu_time_s", "final_res", "termination",
]

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "lines.linewidth": 1.8,
    "lines.markersize": 5.5,
    "axes.grid": True,
    "grid.alpha": 0.35,
    "font.size": 10,
}

_MARKERS = ("o", "s", "^", "d", "v", "x")

Y_LABELS = {"iterations": "iterations to tolerance", "cpu_time_s": "wall time (s)"}


class RenderError(ValueError):
    """Unusable CSV: wrong columns or nothing to plot."""


@dataclass
class FigureSpec:
    input_csv: str
    x_axis: str = "beta"
    y_axis: str = "iterations"
    output_image: str = "figure.png"
    show_points: bool = False  # overlay raw per-trial values

    def validate(self):
        if self.x_axis not in X_AXES:
            raise RenderError(f"x axis must be one of {X_AXES}, got {self.x_axis!r}")
        if self.y_axis not in Y_AXES:
            raise RenderError(f"y axis must be one of {Y_AXES}, got {self.y_axis!r}")


def read_sweep_csv(path):
    """Rows of the harness CSV as dicts; enforces the exact schema."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != EXPECTED_COLUMNS:
            raise RenderError(
                f"{path}: expected columns {','.join(EXPECTED_COLUMNS)}, "
                f"got {','.join(reader.fieldnames or ['<none>'])}"
            )
        return list(reader)


def aggregate(rows, x_axis, y_axis):
    """method -> sorted [(x, median y, [raw y...])] over trials per x value."""
    buckets = {}
    for row in rows:
        if not row[x_axis]:
            raise RenderError(f"row has no {x_axis!r} value: {row}")
        x = int(row[x_axis])
        y = float(row[y_axis])
        buckets.setdefault(row["method"], {}).setdefault(x, []).append(y)
    return {
        method: [(x, median(ys), ys) for x, ys in sorted(series.items())]
        for method, series in sorted(buckets.items())
    }


def build_figure(spec: FigureSpec):
    """Aggregate the CSV and lay out the figure; returns (figure, series)."""
    spec.validate()
    rows = read_sweep_csv(spec.input_csv)
    if not rows:
        raise RenderError(f"{spec.input_csv}: no data rows")
    series = aggregate(rows, spec.x_axis, spec.y_axis)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for pos, (method, points) in enumerate(series.items()):
            xs = [x for x, _, _ in points]
            meds = [med for _, med, _ in points]
            ax.plot(xs, meds, marker=_MARKERS[pos % len(_MARKERS)], label=method)
            if spec.show_points:
                for x, _, ys in points:
                    ax.plot([x] * len(ys), ys, linestyle="none",
                            marker=".", color=ax.lines[-1].get_color(), alpha=0.4)
        ax.set_xlabel(spec.x_axis)
        ax.set_ylabel(Y_LABELS[spec.y_axis])
        ax.set_yscale("log")
        ax.legend()
        fig.tight_layout()
    return fig, series


def render(spec: FigureSpec):
    """Write the figure as a raster image; returns the output path."""
    fig, _ = build_figure(spec)
    try:
        # strip the writer's version string so identical CSVs give identical bytes
        fig.savefig(spec.output_image, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)
    return spec.output_image


def main(argv=None):
    parser = argparse.ArgumentParser(prog="plots", description=__doc__)
    parser.add_argument("csv", help="sweep CSV from the benchmark harness")
    parser.add_argument("--x", choices=X_AXES, default="beta")
    parser.add_argument("--y", choices=Y_AXES, default="iterations")
    parser.add_argument("--out", default="figure.png")
    parser.add_argument("--points", action="store_true",
                        help="overlay raw per-trial values on the median lines")
    args = parser.parse_args(argv)
    spec = FigureSpec(input_csv=args.csv, x_axis=args.x, y_axis=args.y,
                      output_image=args.out, show_points=args.points)
    try:
        path = render(spec)
    except (RenderError, OSError) as exc:
        print(f"plots: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
