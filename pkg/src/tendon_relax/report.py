"""Trace artifacts: per-tick CSV, comparison summary, gnuplot script, PNG figures."""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .scenarios import ComparisonSummary, Trace

CSV_SCHEMA_VERSION = 1
FLOAT_FMT = "%.9g"


def csv_header(n_joints: int = 5, n_muscles: int = 10) -> list[str]:
    cols = ["time"]
    for prefix, n in (("theta", n_joints), ("theta_target", n_joints), ("T", n_muscles),
                      ("T_target", n_muscles), ("T_nec", n_muscles), ("C", n_muscles),
                      ("dl", n_muscles)):
        cols += [f"{prefix}_{i}" for i in range(n)]
    return cols + ["mode", "contact_fn"]


def _umask_mode() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def atomic_write_text(path, text: str):
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, _umask_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv_text(trace: Trace) -> str:
    n_j, n_m = trace.theta.shape[1], trace.T.shape[1]
    numeric = np.column_stack([trace.time, trace.theta, trace.theta_target, trace.T,
                               trace.T_target, trace.T_necessary, trace.C, trace.delta_l])
    row_fmt = ",".join([FLOAT_FMT] * numeric.shape[1])
    buf = io.StringIO()
    buf.write(",".join(csv_header(n_j, n_m)) + "\n")
    for k in range(len(trace)):
        buf.write(row_fmt % tuple(numeric[k]))
        buf.write(f",{trace.mode[k]},{FLOAT_FMT % trace.contact_fn[k]}\n")
    return buf.getvalue()


def write_trace_csv(trace: Trace, path) -> Path:
    atomic_write_text(path, trace_csv_text(trace))
    return Path(path)


def read_trace_csv(path) -> dict:
    """Columns of a trace CSV keyed by header name (``mode`` stays a string array)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        cols[name] = np.array(vals) if name == "mode" else np.array(vals, dtype=float)
    return cols


def summary_text(summary: ComparisonSummary) -> str:
    out = [f"scenario: {summary.scenario}", f"seed: {summary.seed}", "",
           f"{'metric':<30}{'with_mrc':>14}{'without_mrc':>14}"]
    for name, w, wo in summary.rows():
        out.append(f"{name:<30}{w:>14.6g}{wo:>14.6g}")
    out += ["", f"tension_reduction: {summary.tension_reduction:.6g}",
            f"delta_l_saturation_fraction: {summary.saturation_fraction:.6g}"]
    return "\n".join(out) + "\n"


def write_summary(summary: ComparisonSummary, path) -> Path:
    atomic_write_text(path, summary_text(summary))
    return Path(path)


def plot_script(csv_files, n_joints: int = 5, n_muscles: int = 10,
                output: str = "plot.png") -> str:
    """Gnuplot script over the CSVs: tension norm, joint angles, temperature, relaxation."""
    header = csv_header(n_joints, n_muscles)
    col = {name: i + 1 for i, name in enumerate(header)}
    t_cols = [col[f"T_{i}"] for i in range(n_muscles)]
    norm = "sqrt(" + "+".join(f"column({c})**2" for c in t_cols) + ")"
    lines = ["# generated by tendon_relax; render with: gnuplot plot.gp",
             "set datafile separator ','",
             "set terminal pngcairo size 1200,1400 noenhanced",
             f"set output '{output}'",
             "set key outside right",
             "set multiplot layout 4,1",
             "set xlabel 'time [s]'"]

    def panel(title, ylabel, series):
        plots = []
        for fname in csv_files:
            stem = Path(fname).stem
            for expr, label in series:
                plots.append(f"'{Path(fname).name}' every ::1 using 1:({expr}) "
                             f"with lines title '{stem} {label}'")
        lines.extend([f"set title '{title}'", f"set ylabel '{ylabel}'",
                      "plot " + ", \\\n     ".join(plots)])

    panel("tension norm", "|T|_2 [N]", [(norm, "|T|")])
    panel("joint angles", "theta [rad]",
          [(f"column({col[f'theta_{j}']})", f"theta_{j}") for j in range(n_joints)])
    panel("muscle temperature", "C [degC]",
          [(f"column({col[f'C_{i}']})", f"C_{i}") for i in range(n_muscles)])
    panel("relaxation", "dl [mm]",
          [(f"column({col[f'dl_{i}']})", f"dl_{i}") for i in range(n_muscles)])
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def write_plot_script(csv_files, path, n_joints: int = 5, n_muscles: int = 10) -> Path:
    path = Path(path)
    atomic_write_text(path, plot_script(csv_files, n_joints, n_muscles,
                                        output=path.with_suffix(".png").name))
    return path


def render_figure(traces: dict, path, title: str = "") -> Path:
    """Four stacked panels (|T|, theta, C, dl) with one colour per run label."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(4, 1, figsize=(10, 12), sharex=True)
    styles = ("-", "--", ":", "-.")
    for k, (label, tr) in enumerate(traces.items()):
        ls = styles[k % len(styles)]
        axes[0].plot(tr.time, tr.tension_norm(), ls, label=label)
        for j in range(tr.theta.shape[1]):
            axes[1].plot(tr.time, tr.theta[:, j], ls, color=f"C{j}",
                         label=f"{label} theta_{j}" if k == 0 else None)
        axes[2].plot(tr.time, tr.C.max(axis=1), ls, label=f"{label} max C")
        for i in range(tr.delta_l.shape[1]):
            axes[3].plot(tr.time, tr.delta_l[:, i], ls, color=f"C{i}", lw=0.8)
    axes[0].set_ylabel("|T|_2 [N]")
    axes[1].set_ylabel("theta [rad]")
    axes[2].set_ylabel("C [degC]")
    axes[3].set_ylabel("dl [mm]")
    axes[3].set_xlabel("time [s]")
    for ax in axes[:3]:
        ax.legend(fontsize=7, loc="upper right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fd, tmp = tempfile.mkstemp(prefix=f".{Path(path).name}.", suffix=".png",
                               dir=Path(path).parent)
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=100, metadata={"Software": None})
        os.chmod(tmp, _umask_mode())
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    return Path(path)
