"""Write a finished (or aborted) run to disk as CSV tables and optional figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import absolute_energy_drift, relative_energy_error
from .sampling import write_mesh_csv, write_points_csv


class ReportError(OSError):
    pass


def _coord_names(dim):
    return [f"x{i + 1}" for i in range(dim)] + ["t"]


def _report_dim(report):
    for ps in report.point_sets.values():
        return ps.interior.shape[1] - 1
    if report.error is not None:
        return report.error.grid.shape[1] - 1
    try:
        from .problems import make_problem

        return make_problem(report.problem).dim
    except Exception:
        return 1


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror}") from exc


def write_loss_csv(report, path):
    rows = report.loss_history
    names = []
    for _, _, terms in rows:
        for k in terms:
            if k not in names:
                names.append(k)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "total", *names])
        for it, total, terms in rows:
            w.writerow([it, repr(total), *[repr(terms.get(k, math.nan)) for k in names]])


def write_energy_csv(report, path):
    """Columns ``t, H_d, dH_rel``; with a zero reference the last column is the absolute drift."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "H_d", "dH_rel"])
        tr = report.energy
        if tr is None:
            return
        errs = absolute_energy_drift(tr) if tr.flagged else relative_energy_error(tr)
        for t, h, e in zip(tr.times, tr.energies, errs):
            w.writerow([repr(t), repr(h), repr(e)])


def write_error_csv(report, path):
    dim = _report_dim(report)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow([*_coord_names(dim), "u_exact", "u_pred", "abs_err"])
        er = report.error
        if er is None:
            return
        data = np.column_stack(
            [er.grid.numpy(), er.exact.numpy(), er.predicted.numpy(), er.abs_error.numpy()]
        )
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def write_phases_csv(report, path):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "kind", "iterations", "seconds", "final_loss", "aborted"])
        for ph in report.phases:
            last = ph.history[-1][0] if ph.history else ""
            w.writerow([ph.name, ph.kind, ph.iterations, f"{ph.seconds:.3f}", last, ph.aborted or ""])


def summary(report):
    return {
        "problem": report.problem,
        "sampler": report.sampler,
        "seed": report.seed,
        "relative_l2": report.relative_l2,
        "max_energy_error": report.max_energy_error,
        "energy_reference_zero": bool(report.energy is not None and report.energy.flagged),
        "iterations": len(report.loss_history),
        "correlations": list(report.correlations),
        "energy_checks": report.info.get("energy_checks", []),
        "warnings": list(report.warnings),
        "aborted": report.aborted,
    }


def write_report(report, out_dir, plots=True, image_format="png"):
    """Write every artifact of ``report`` under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out}: {exc.strerror}") from exc
    paths = {
        "loss": out / "loss.csv",
        "energy": out / "energy.csv",
        "error": out / "error.csv",
        "phases": out / "phases.csv",
        "summary": out / "summary.json",
    }
    write_loss_csv(report, paths["loss"])
    write_energy_csv(report, paths["energy"])
    write_error_csv(report, paths["error"])
    write_phases_csv(report, paths["phases"])
    with _open(paths["summary"]) as fh:
        json.dump(summary(report), fh, indent=2)
    for name, ps in report.point_sets.items():
        p = out / f"points_{name}.csv"
        write_points_csv(ps, p)
        paths[f"points_{name}"] = p
    if report.meshes:
        times = list(report.energy.times) if report.energy is not None else [0.0]
        for k, mesh in enumerate(report.meshes, 1):
            p = out / f"mesh_round{k}.csv"
            write_mesh_csv(mesh, times, p, resolution=101 if mesh.dim == 1 else 41)
            paths[f"mesh_round{k}"] = p
    if report.net is not None:
        p = out / "solution.ckpt"
        report.net.save(p)
        paths["checkpoint"] = p
    if plots:
        paths.update(write_figures(report, out, image_format))
    return paths


# --------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _snapshot_slices(er, count=3):
    """Indices of the test grid at ``count`` evenly spread time levels."""
    t = er.grid[:, -1].numpy()
    levels = np.unique(t)
    picks = levels[np.linspace(0, len(levels) - 1, min(count, len(levels))).round().astype(int)]
    return [(float(v), np.flatnonzero(t == v)) for v in picks]


def write_figures(report, out, image_format="png"):
    plt = _pyplot()
    out = Path(out)
    written = {}

    def save(fig, kind, time_label):
        p = out / f"{kind}_{time_label}.{image_format}"
        fig.savefig(p, dpi=110, bbox_inches="tight")
        plt.close(fig)
        written[f"{kind}_{time_label}"] = p

    rows = report.loss_history
    if rows:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy([r[0] for r in rows], [r[1] for r in rows], lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        save(fig, "loss", "all")

    tr = report.energy
    if tr is not None and tr.times:
        errs = absolute_energy_drift(tr) if tr.flagged else relative_energy_error(tr)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy(tr.times, np.maximum(errs, 1e-300), "o-", ms=3)
        ax.set_xlabel("t")
        ax.set_ylabel("absolute energy drift" if tr.flagged else "relative energy error")
        save(fig, "energy", "all")

    er = report.error
    if er is not None:
        dim = er.grid.shape[1] - 1
        if dim == 1:
            nx, nt = er.resolution
            x = er.grid[:, 0].numpy().reshape(nx, nt)
            t = er.grid[:, 1].numpy().reshape(nx, nt)
            for kind, vals in (("solution", er.predicted), ("error", er.abs_error)):
                fig, ax = plt.subplots(figsize=(5, 3.5))
                m = ax.pcolormesh(t, x, vals.numpy().reshape(nx, nt), shading="auto")
                fig.colorbar(m, ax=ax)
                ax.set_xlabel("t")
                ax.set_ylabel("x")
                save(fig, kind, "all")
        else:
            for tv, idx in _snapshot_slices(er):
                g = er.grid[idx].numpy()
                for kind, vals in (("solution", er.predicted), ("error", er.abs_error)):
                    fig, ax = plt.subplots(figsize=(4.5, 4))
                    m = ax.tricontourf(g[:, 0], g[:, 1], vals.numpy()[idx], levels=30)
                    fig.colorbar(m, ax=ax)
                    ax.set_aspect("equal")
                    save(fig, kind, f"t{tv:g}")

    for name, ps in report.point_sets.items():
        X = ps.interior.numpy()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if X.shape[1] == 2:
            ax.scatter(X[:, 1], X[:, 0], s=2)
            ax.set_xlabel("t")
            ax.set_ylabel("x")
        else:
            sc = ax.scatter(X[:, 0], X[:, 1], c=X[:, -1], s=2)
            fig.colorbar(sc, ax=ax, label="t")
            ax.set_aspect("equal")
        save(fig, "points", name)
    return written
