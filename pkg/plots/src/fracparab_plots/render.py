"""Batch figure renderer for the experiment CSV outputs.

Reads a small JSON figure spec and emits one static image.  Five figure
kinds are supported, one per CSV schema the command-line experiments write:

- ``convergence``: log-log error-versus-resolution lines with a fitted
  least-squares slope annotated per metric.
- ``nonuniq``: paired lines over refinement levels -- the exterior Cauchy-gap
  (log scale, expected to fall) against the interior coefficient gap
  (linear scale, expected to stay order one).
- ``carleman``: per-sample weighted-inequality ratios against the weight
  parameter beta, with the per-beta envelope.
- ``extension``: heatmap of degenerate-ODE trace errors over the
  (frequency, eigenvalue) grid, one panel per fractional order.
- ``snapshot``: field or kernel profiles, one line per group value.

Rendering is deterministic: fixed style, Agg backend, no timestamps, so
re-running a spec reproduces the image byte for byte.  Exit codes: 0 on
success, 1 when the CSV has no data rows, 2 for spec/schema errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

#: Fixed style so that figure bytes depend only on the spec and the CSV.
STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
}

KINDS = ("convergence", "nonuniq", "carleman", "extension", "snapshot")


class RenderError(Exception):
    """Spec or schema problem; maps to exit code 2."""


class NoDataError(Exception):
    """CSV parsed fine but carries no data rows; maps to exit code 1."""


def load_table(path: Path) -> dict[str, list[str]]:
    """Read a CSV into a column -> list-of-strings mapping."""
    if not path.is_file():
        raise RenderError(f"CSV not found: {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise NoDataError(f"no data: {path} is empty") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    if not rows:
        raise NoDataError(f"no data: {path} has a header but no rows")
    cols = {name: [] for name in header}
    for r in rows:
        if len(r) != len(header):
            raise RenderError(
                f"malformed row in {path}: expected {len(header)} fields, "
                f"got {len(r)}")
        for name, cell in zip(header, r):
            cols[name].append(cell)
    return cols


def column(table: dict[str, list[str]], name: str, path,
           numeric: bool = True):
    if name not in table:
        raise RenderError(
            f"missing column '{name}' in {path}; have: "
            + ", ".join(table))
    if not numeric:
        return np.asarray(table[name])
    try:
        return np.asarray([float(v) for v in table[name]])
    except ValueError as exc:
        raise RenderError(f"column '{name}' in {path} is not numeric: {exc}")


def fitted_slope(x: np.ndarray, y: np.ndarray) -> float | None:
    """Least-squares slope of log y against log x; None if degenerate."""
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2 or np.ptp(np.log(x[keep])) == 0:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def render_convergence(table, spec, path, ax):
    metric = column(table, "metric", path, numeric=False)
    value = column(table, "value", path)
    h = column(table, "h", path)
    dt = column(table, "dt", path)
    wanted = spec.get("metric")
    names = [m for m in dict.fromkeys(metric)
             if wanted is None or m == wanted]
    if not names:
        raise NoDataError(f"no data: metric '{wanted}' not present in {path}")
    for name in names:
        sel = metric == name
        # plot against whichever resolution actually varies in this study
        x, xlabel = (h[sel], "h") if np.ptp(h[sel]) > 0 else (dt[sel], "dt")
        order = np.argsort(x)
        x, y = x[order], value[sel][order]
        slope = fitted_slope(x, y)
        label = name if slope is None else f"{name} (slope {slope:.2f})"
        ax.loglog(x, y, marker="o", label=label)
        ax.set_xlabel(xlabel)
    ax.set_ylabel("value")
    ax.legend()
    ax.set_title(spec.get("title", "convergence"))


def render_nonuniq(table, spec, path, ax):
    level = column(table, "level", path)
    cauchy = column(table, "cauchy_gap", path)
    coeff = column(table, "coeff_gap", path)
    order = np.argsort(level)
    ax.semilogy(level[order], cauchy[order], marker="o", color="tab:blue",
                label="cauchy_gap")
    ax.set_xlabel("refinement level")
    ax.set_ylabel("cauchy_gap", color="tab:blue")
    twin = ax.twinx()
    twin.plot(level[order], coeff[order], marker="s", color="tab:red",
              label="coeff_gap")
    twin.set_ylabel("coeff_gap", color="tab:red")
    twin.set_ylim(0, max(1.0, 1.2 * float(coeff.max())))
    twin.grid(False)
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    ax.set_title(spec.get("title",
                          "matched exterior data, distinct coefficients"))


def render_carleman(table, spec, path, ax):
    beta = column(table, "beta", path)
    ratio = column(table, "ratio", path)
    ax.plot(beta, ratio, linestyle="none", marker=".", alpha=0.5,
            color="tab:blue", label="samples")
    betas = np.unique(beta)
    env = np.asarray([ratio[beta == b].max() for b in betas])
    ax.plot(betas, env, marker="o", color="tab:red", label="envelope")
    ax.set_xlabel("beta")
    ax.set_ylabel("lhs / rhs ratio")
    ax.legend()
    ax.set_title(spec.get("title", "weighted inequality ratio vs beta"))


def render_extension(fig, table, spec, path):
    lam = column(table, "lambda_re", path)
    rho = column(table, "rho", path)
    s = column(table, "s", path)
    err = column(table, "trace_err", path)
    orders = np.unique(s)
    axes = fig.subplots(1, len(orders), squeeze=False)[0]
    vmin, vmax = float(err[err > 0].min()), float(err.max())
    mesh = None
    for ax, sv in zip(axes, orders):
        sel = s == sv
        lams, rhos = np.unique(lam[sel]), np.unique(rho[sel])
        z = np.full((len(rhos), len(lams)), np.nan)
        li = np.searchsorted(lams, lam[sel])
        ri = np.searchsorted(rhos, rho[sel])
        z[ri, li] = err[sel]
        mesh = ax.pcolormesh(lams, rhos, z, shading="nearest",
                             norm=matplotlib.colors.LogNorm(vmin, vmax),
                             cmap="viridis")
        ax.set_xlabel("lambda")
        ax.set_title(f"s = {sv:g}")
    axes[0].set_ylabel("rho")
    fig.colorbar(mesh, ax=list(axes), label="trace error")
    fig.suptitle(spec.get("title", "extension trace error"))


def render_snapshot(table, spec, path, ax):
    names = list(table)
    xcol = spec.get("x", names[0])
    vcol = spec.get("value", "value")
    x = column(table, xcol, path)
    v = column(table, vcol, path)
    used = {xcol, vcol}
    groups = [spec["group"]] if "group" in spec else \
        [c for c in names if c not in used]
    gcol = groups[0] if groups else None
    if gcol is None:
        order = np.argsort(x)
        ax.plot(x[order], v[order])
    else:
        g = column(table, gcol, path, numeric=False)
        for gv in dict.fromkeys(table[gcol]):
            sel = g == gv
            order = np.argsort(x[sel])
            ax.plot(x[sel][order], v[sel][order],
                    label=f"{gcol} = {gv}")
        ax.legend()
    ax.set_xlabel(xcol)
    ax.set_ylabel(vcol)
    ax.set_title(spec.get("title", "field snapshot"))


def render(spec_path: Path) -> Path:
    """Render the figure described by a JSON spec; returns the image path."""
    try:
        with open(spec_path) as f:
            spec = json.load(f)
    except OSError as exc:
        raise RenderError(f"cannot read spec: {exc}")
    except json.JSONDecodeError as exc:
        raise RenderError(f"spec is not valid JSON: {exc}")
    if not isinstance(spec, dict):
        raise RenderError("spec must be a JSON object")
    for key in ("kind", "csv", "out"):
        if key not in spec:
            raise RenderError(f"spec is missing required key '{key}'")
    kind = spec["kind"]
    if kind not in KINDS:
        raise RenderError(
            f"unknown figure kind '{kind}'; expected one of {KINDS}")
    base = spec_path.parent
    csv_path = Path(spec["csv"])
    if not csv_path.is_absolute():
        csv_path = base / csv_path
    out_path = Path(spec["out"])
    if not out_path.is_absolute():
        out_path = base / out_path

    table = load_table(csv_path)
    with plt.rc_context(STYLE):
        fig = plt.figure()
        try:
            if kind == "extension":
                render_extension(fig, table, spec, csv_path)
            else:
                ax = fig.add_subplot()
                {"convergence": render_convergence,
                 "nonuniq": render_nonuniq,
                 "carleman": render_carleman,
                 "snapshot": render_snapshot}[kind](table, spec, csv_path, ax)
            out_path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out_path, metadata={"Software": None})
        finally:
            plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render one static figure from an experiment CSV.")
    parser.add_argument("spec", help="JSON figure spec (kind, csv, out)")
    args = parser.parse_args(argv)
    try:
        out = render(Path(args.spec))
    except NoDataError as exc:
        print(exc, file=sys.stderr)
        return 1
    except RenderError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
