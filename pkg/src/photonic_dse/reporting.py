"""CSV tables and figures for sweeps, penalties and simulation reports.

Every table is plain CSV with floats written to 9 significant digits.
Files are written atomically: the content goes to a temporary file in
the destination directory which is then renamed over the target.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

from .device_models import ALL_ORGS, DpuOrganization, crosstalk_profile, propagation_loss_db, through_loss_db
from .link_budget import SWEEP_HEADER, PhotonicLinkParams

REPORT_HEADER = ["model", "org", "datarate_gsps", "n", "m", "dpu_count", "latency_s", "energy_j",
                 "avg_power_w", "area_mm2", "fps", "fps_per_w", "fps_per_w_per_mm2"]
COMPARE_HEADER = REPORT_HEADER + ["norm_fps", "norm_fps_per_w", "norm_fps_per_w_per_mm2"]
BREAKDOWN_HEADER = ["model", "org", "datarate_gsps", "component", "energy_j", "share"]
PENALTY_HEADER = ["org", "n", "inter_modulation", "cross_weight", "filter_truncation",
                  "through_loss_db", "propagation_loss_db", "network_penalty_db", "total_penalty_db"]


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, DpuOrganization):
        return value.name
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.9g}"
    return str(value)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path, data: "str | bytes") -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- tables ---------------------------------------------------------------

def scalability_table(rows) -> str:
    return to_csv(SWEEP_HEADER, ([r.org, r.datarate_gsps, r.bit_precision, r.result.p_pd_opt_dbm,
                                  r.result.n_max, r.result.fsr_capped] for r in rows))


def penalty_rows(n_list, orgs=ALL_ORGS, params: PhotonicLinkParams = None):
    params = params or PhotonicLinkParams()
    out = []
    for org in orgs:
        org = DpuOrganization.parse(org)
        xt = crosstalk_profile(org)
        for n in n_list:
            through = through_loss_db(org, n, params.p_mrm_obl_db)
            prop = propagation_loss_db(org, n, params.d_mrr_mm, params.p_si_att_db_per_mm)
            net = params.penalty_db(org)
            out.append([org, n, xt.inter_modulation, xt.cross_weight, xt.filter_truncation,
                        through, prop, net, through + prop + net])
    return out


def penalty_table(n_list, orgs=ALL_ORGS, params=None) -> str:
    return to_csv(PENALTY_HEADER, penalty_rows(n_list, orgs, params))


def _report_fields(model_name, config, report):
    return [model_name, config.org, config.datarate_gsps, config.n, config.m, config.dpu_count,
            report.latency_s, report.energy_j, report.avg_power_w, report.area_mm2,
            report.fps, report.fps_per_w, report.fps_per_w_per_mm2]


def report_table(results) -> str:
    """``results`` holds (model name, config, SimReport) triples."""
    return to_csv(REPORT_HEADER, (_report_fields(*r) for r in results))


def breakdown_table(results) -> str:
    rows = []
    for model_name, config, report in results:
        for comp, energy in report.energy_breakdown.items():
            share = energy / report.energy_j if report.energy_j > 0 else 0.0
            rows.append([model_name, config.org, config.datarate_gsps, comp, energy, share])
    return to_csv(BREAKDOWN_HEADER, rows)


def compare_table(rows) -> str:
    return to_csv(COMPARE_HEADER, (
        _report_fields(r.model, r.config, r.report)
        + [r.norm_fps, r.norm_fps_per_w, r.norm_fps_per_w_per_mm2] for r in rows))


# -- figures --------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    buf = io.BytesIO()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    atomic_write(path, buf.getvalue())


def plot_scalability(rows, path) -> None:
    """N versus bit precision, one panel per datarate."""
    plt = _pyplot()
    rates = sorted({r.datarate_gsps for r in rows})
    fig, axes = plt.subplots(1, len(rates), figsize=(4 * len(rates), 3.4), sharey=True, squeeze=False)
    for ax, dr in zip(axes[0], rates):
        for org in ALL_ORGS:
            pts = [(r.bit_precision, r.result.n_max) for r in rows if r.org is org and r.datarate_gsps == dr]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker="o", label=org.name)
        ax.set_title(f"{fmt(float(dr))} GS/s")
        ax.set_xlabel("bit precision B")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("supported N (= M)")
    axes[0][-1].legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_penalty(rows, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.4))
    orgs = [r[0] for r in rows]
    labels = [f"{r[0].name}\nN={r[1]}" for r in rows]
    x = range(len(rows))
    bottom = [0.0] * len(rows)
    for col, name in ((5, "through"), (6, "propagation"), (7, "network")):
        vals = [r[col] for r in rows]
        ax.bar(x, vals, bottom=bottom, label=name)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_xticks(list(x), labels, fontsize=7 if len(orgs) > 6 else 9)
    ax.set_ylabel("loss / penalty (dB)")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_reports(results, path) -> None:
    """FPS per model, grouped by organization and datarate (log scale)."""
    plt = _pyplot()
    models = list(dict.fromkeys(r[0] for r in results))
    cells = list(dict.fromkeys((r[1].org, r[1].datarate_gsps) for r in results))
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(models) * max(1, len(cells)) / 3), 3.6))
    width = 0.8 / max(1, len(cells))
    for j, (org, dr) in enumerate(cells):
        ys = []
        for m in models:
            hit = [rep.fps for name, cfg, rep in results
                   if name == m and cfg.org is org and cfg.datarate_gsps == dr]
            ys.append(hit[0] if hit and math.isfinite(hit[0]) else 0.0)
        ax.bar([i + j * width for i in range(len(models))], ys, width, label=f"{org.name} {fmt(float(dr))}G")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(models))], models)
    ax.set_yscale("log")
    ax.set_ylabel("FPS")
    ax.legend(fontsize=7, ncol=3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_compare(rows, path) -> None:
    """Normalized FPS, FPS/W and FPS/W/mm2, one panel per metric."""
    plt = _pyplot()
    models = list(dict.fromkeys(r.model for r in rows))
    cells = list(dict.fromkeys((r.org, r.datarate_gsps) for r in rows))
    metrics = (("norm_fps", "FPS"), ("norm_fps_per_w", "FPS/W"), ("norm_fps_per_w_per_mm2", "FPS/W/mm$^2$"))
    fig, axes = plt.subplots(len(metrics), 1, figsize=(max(6, 1.4 * len(models)), 8), sharex=True)
    width = 0.8 / max(1, len(cells))
    for ax, (attr, label) in zip(axes, metrics):
        for j, (org, dr) in enumerate(cells):
            ys = []
            for m in models:
                hit = [getattr(r, attr) for r in rows if r.model == m and r.org is org and r.datarate_gsps == dr]
                ys.append(hit[0] if hit else 0.0)
            ax.bar([i + j * width for i in range(len(models))], ys, width, label=f"{org.name} {fmt(float(dr))}G")
        ax.set_yscale("log")
        ax.set_ylabel(f"normalized {label}")
        ax.axhline(1.0, color="k", lw=0.6)
    axes[-1].set_xticks([i + 0.4 - width / 2 for i in range(len(models))], models)
    axes[0].legend(fontsize=7, ncol=3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")
