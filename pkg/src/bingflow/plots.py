"""Figure rendering for run and sweep reports.

Every function takes a report document (the dict stored in report.json) and
writes PNG files next to the delimited output.  Rendering is headless
(Agg backend) and never displays a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_report_figures"]


def _save(fig, path: Path, written: list) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(str(path))


def _norm_series_figure(doc: dict):
    s = doc["series"]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    ax1.plot(s["t"], s["norm_H"], "-o", ms=2.5, label="velocity L2 norm")
    ax1.plot(s["t"], s["norm_V"], "-s", ms=2.5, label="gradient L2 norm")
    ax1.set_ylabel("norm")
    ax1.legend(frameon=False)
    ax2.plot(s["t"], s["yielded_fraction"], "-", color="tab:red", label="yielded fraction")
    ax2.set_ylim(-0.02, 1.02)
    ax2.set_xlabel("t")
    ax2.set_ylabel("yielded fraction")
    ax2.legend(frameon=False)
    return fig


def _energy_figure(doc: dict):
    ledgers = doc.get("ledgers", [])
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if ledgers:
        t = [led["s2"] for led in ledgers]
        ax.plot(t, [led["dissipation"] for led in ledgers], "-o", ms=2.5, label="dissipation")
        ax.plot(t, [led["work"] for led in ledgers], "-s", ms=2.5, label="forcing work")
        ax.plot(t, [abs(led["residual"]) for led in ledgers], "-^", ms=2.5,
                label="|ledger residual|")
        ax.set_yscale("symlog", linthresh=1e-14)
        ax.legend(frameon=False)
    ax.set_xlabel("t")
    ax.set_ylabel("interval energy")
    return fig


def _load_fields_csv(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    with open(path, "r", encoding="utf-8") as fh:
        names = fh.readline().strip().split(",")
    return names, data


def _field_maps_figure(names, data, nx: int, ny: int):
    cols = {name: data[:, k].reshape(nx, ny) for k, name in enumerate(names)}
    speed = np.sqrt(cols["u"] ** 2 + cols["v"] ** 2)
    panels = [("speed", speed), ("p", cols["p"])]
    if "D_norm" in cols:
        panels.append(("strain norm", cols["D_norm"]))
    if "yielded" in cols:
        panels.append(("yielded", cols["yielded"]))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.1 * len(panels), 3.0))
    extent = (cols["x"].min(), cols["x"].max(), cols["y"].min(), cols["y"].max())
    for ax, (title, arr) in zip(np.atleast_1d(axes), panels):
        im = ax.imshow(arr.T, origin="lower", extent=extent, aspect="auto",
                       cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title(title, fontsize=9)
    return fig


def _channel_profile_figure(names, data, nx: int, ny: int, doc: dict):
    cols = {name: data[:, k].reshape(nx, ny) for k, name in enumerate(names)}
    y = cols["y"][0, :]
    prof = np.mean(cols["u"], axis=0)
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(prof, y, "-o", ms=2.5, label="computed")
    oracle = doc.get("channel_oracle")
    if oracle:
        ax.plot(oracle["u"], oracle["y"], "-", color="k", lw=1, label="analytic")
        ax.legend(frameon=False)
    ax.set_xlabel("u")
    ax.set_ylabel("y")
    return fig


def _msweep_figure(limit: dict):
    m = limit["m_values"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.6, 3.2))
    if len(m) > 1:
        ax1.loglog(m[1:], limit["delta_H"][1:], "-o", ms=3)
    ax1.set_xlabel("m")
    ax1.set_ylabel("successive state change")
    ax2.semilogx(m, limit["plug_half_width"], "-o", ms=3, label="detected")
    ax2.semilogx(m, limit["plug_half_width_analytic"], "--", color="k", label="analytic")
    ax2.set_xlabel("m")
    ax2.set_ylabel("plug half-width")
    ax2.legend(frameon=False)
    return fig


def render_report_figures(doc: dict, out_dir) -> list[str]:
    """Render the standard figure set for a report document into out_dir.

    Returns the list of files written.  Field maps and the channel profile
    need the fields CSV referenced by the report; they are skipped when the
    file is absent.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    if doc.get("series", {}).get("t"):
        _save(_norm_series_figure(doc), out / "norms_timeseries.png", written)
        _save(_energy_figure(doc), out / "energy_budget.png", written)
    fields_rel = doc.get("fields_csv")
    cfg = doc.get("config", {})
    if fields_rel and (out / fields_rel).is_file() and cfg:
        names, data = _load_fields_csv(out / fields_rel)
        nx, ny = int(cfg["nx"]), int(cfg["ny"])
        _save(_field_maps_figure(names, data, nx, ny), out / "field_maps.png", written)
        if cfg.get("scenario") == "channel":
            _save(_channel_profile_figure(names, data, nx, ny, doc),
                  out / "channel_profile.png", written)
    if doc.get("limit_report"):
        _save(_msweep_figure(doc["limit_report"]), out / "msweep_metrics.png", written)
    return written
