"""Report rendering: JSON documents, delimited tables, and figures.

Every report-producing command writes three artifact kinds side by side:
the machine-readable JSON, a delimited CSV for spreadsheets, and PNG
figures (z-score bars, loss traces, sweep curves).  PNG metadata is
stripped so reruns stay byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .inference import PeiReport  # noqa: E402
from .stealing import StealReport  # noqa: E402

_SAVEFIG_KW = {"dpi": 110, "metadata": {"Software": None}}


def _save(fig, path: Path):
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


# ---------------------------------------------------------------------------
# inference reports


def write_inference_reports(reports: list[PeiReport], outdir: str | Path,
                            tag: str = "inference") -> Path:
    root = Path(outdir) / tag
    root.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        (root / f"{rep.service_name}.json").write_text(rep.to_json_str() + "\n")
        (root / f"{rep.service_name}.txt").write_text(rep.render_table() + "\n")
        _save(zscore_figure(rep), root / f"{rep.service_name}.png")
    write_scores_csv(reports, root / "scores.csv")
    (root / "summary.txt").write_text(render_verdict_summary(reports) + "\n")
    return root


def write_scores_csv(reports: list[PeiReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["service", "candidate", "score", "z", "verdict"])
        for rep in reports:
            for i, name in enumerate(rep.candidate_names):
                z = "" if rep.zscores is None else f"{rep.zscores[i]:.6f}"
                writer.writerow([rep.service_name, name,
                                 f"{rep.scores[i]:.6f}", z,
                                 rep.identified_name or ""])


def render_verdict_summary(reports: list[PeiReport]) -> str:
    width = max(len(r.service_name) for r in reports) + 2
    lines = [f"{'service':<{width}}{'max z':>8}  inferred encoder"]
    for rep in reports:
        zmax = "--" if rep.zscores is None else f"{max(rep.zscores):8.2f}"
        lines.append(f"{rep.service_name:<{width}}{zmax:>8}  "
                     f"{rep.identified_name or '(no candidate)'}")
    return "\n".join(lines)


def zscore_figure(report: PeiReport):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    n = len(report.candidate_names)
    zs = report.zscores if report.zscores is not None else [0.0] * n
    colors = ["#2b7fb8" if report.verdict.identified == i else "#9aa5b1"
              for i in range(n)]
    ax.bar(range(n), zs, color=colors)
    ax.axhline(report.threshold, color="#c0392b", linewidth=1,
               linestyle="--", label=f"threshold {report.threshold:g}")
    ax.set_xticks(range(n))
    ax.set_xticklabels(report.candidate_names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("z-score")
    ax.set_title(report.service_name, fontsize=10)
    ax.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    return fig


# ---------------------------------------------------------------------------
# defense report


def write_defense_report(arms: dict[str, PeiReport], outdir: str | Path,
                         meta: dict) -> Path:
    """Three-arm comparison: origin / defended / defended vs resized."""
    root = Path(outdir) / "defense"
    root.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta,
           "arms": {name: rep.to_json() for name, rep in arms.items()}}
    (root / "defense.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    with open(root / "defense.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "candidate", "score", "z", "verdict"])
        for arm, rep in arms.items():
            for i, name in enumerate(rep.candidate_names):
                z = "" if rep.zscores is None else f"{rep.zscores[i]:.6f}"
                writer.writerow([arm, name, f"{rep.scores[i]:.6f}", z,
                                 rep.identified_name or ""])

    first = next(iter(arms.values()))
    names = first.candidate_names
    n = len(names)
    fig, ax = plt.subplots(figsize=(7, 3.4))
    width = 0.8 / len(arms)
    for a, (arm, rep) in enumerate(arms.items()):
        zs = rep.zscores if rep.zscores is not None else [0.0] * n
        ax.bar([i + a * width for i in range(n)], zs, width=width, label=arm)
    ax.axhline(first.threshold, color="#c0392b", linewidth=1, linestyle="--")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(n)])
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("z-score")
    ax.set_title(f"defense arms ({first.service_name})", fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, root / "defense.png")
    return root


# ---------------------------------------------------------------------------
# stealing report


def write_steal_report(reports: list[StealReport], outdir: str | Path,
                       meta: dict) -> Path:
    root = Path(outdir) / "steal"
    root.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta, "results": [r.to_json() for r in reports]}
    (root / "steal.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    with open(root / "steal.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label_mode", "stolen_kind", "accuracy", "fidelity",
                         "queries"])
        for r in reports:
            writer.writerow([r.label_mode, r.stolen_kind, f"{r.accuracy:.4f}",
                             f"{r.fidelity:.4f}", r.query_count])

    (root / "steal.txt").write_text(render_steal_table(reports) + "\n")

    kinds = ["correct", "wrong", "scratch"]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
    for ax, metric in zip(axes, ("accuracy", "fidelity")):
        for m, mode in enumerate(("soft", "hard")):
            vals = [next(getattr(r, metric) for r in reports
                         if r.label_mode == mode and r.stolen_kind == kind)
                    for kind in kinds]
            ax.bar([i + m * 0.4 for i in range(3)], vals, width=0.4, label=mode)
        ax.set_xticks([i + 0.2 for i in range(3)])
        ax.set_xticklabels(kinds)
        ax.set_title(metric, fontsize=10)
        ax.set_ylim(0, 1)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    _save(fig, root / "steal.png")
    return root


def render_steal_table(reports: list[StealReport]) -> str:
    lines = [f"{'mode':<6}{'stolen model':<14}{'accuracy %':>11}{'fidelity %':>11}"]
    for r in reports:
        lines.append(f"{r.label_mode:<6}{r.stolen_kind:<14}"
                     f"{100 * r.accuracy:>11.2f}{100 * r.fidelity:>11.2f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sweep and traces


def write_sweep_report(per_s_reports: dict[int, list[PeiReport]],
                       outdir: str | Path) -> Path:
    """z-score of each candidate as the direction count S varies."""
    root = Path(outdir) / "sweep"
    root.mkdir(parents=True, exist_ok=True)
    doc = {str(s): [rep.to_json() for rep in reps]
           for s, reps in sorted(per_s_reports.items())}
    (root / "sweep.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    with open(root / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["directions", "service", "candidate", "score", "z"])
        for s, reps in sorted(per_s_reports.items()):
            for rep in reps:
                for i, name in enumerate(rep.candidate_names):
                    z = "" if rep.zscores is None else f"{rep.zscores[i]:.6f}"
                    writer.writerow([s, rep.service_name, name,
                                     f"{rep.scores[i]:.6f}", z])

    services = [rep.service_name for rep in next(iter(per_s_reports.values()))]
    for si, svc_name in enumerate(services):
        fig, ax = plt.subplots(figsize=(6, 3.4))
        svalues = sorted(per_s_reports)
        some = per_s_reports[svalues[0]][si]
        for ci, cand in enumerate(some.candidate_names):
            zs = [per_s_reports[s][si].zscores[ci]
                  if per_s_reports[s][si].zscores is not None else 0.0
                  for s in svalues]
            ax.plot(svalues, zs, marker="o", label=cand)
        ax.axhline(some.threshold, color="#c0392b", linewidth=1, linestyle="--")
        ax.set_xlabel("directions per estimate (S)")
        ax.set_ylabel("z-score")
        ax.set_title(svc_name, fontsize=10)
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, root / f"sweep_{svc_name}.png")
    return root


def write_loss_traces(sample_set, outdir: str | Path) -> Path:
    root = Path(outdir)
    root.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 3.4))
    cfg = sample_set.config
    for i, name in enumerate(sample_set.candidate_names):
        traces = [sample_set.loss_traces[(i, j, k)]
                  for j in range(cfg.objectives_count)
                  for k in range(cfg.replicas)]
        mean_trace = [sum(t[step] for t in traces) / len(traces)
                      for step in range(cfg.iterations)]
        ax.plot(mean_trace, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean probe loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, root / "loss_traces.png")
    return root


def render_budget_projection(config, price_per_query, candidates: int) -> str:
    from .synthesis import estimate_cost

    probes = config.probe_queries_per_candidate()
    total = config.total_queries_per_candidate()
    cost = estimate_cost(total, price_per_query)
    lines = [
        "budget projection (per candidate encoder)",
        f"  objectives x replicas:  {config.objectives_count} x {config.replicas}",
        f"  iterations x 2S:        {config.iterations} x {2 * config.directions}",
        f"  probe queries:          {probes:,}",
        f"  total queries (+1 objective encode per sample): {total:,}",
        f"  unit price:             ${price_per_query}",
        f"  cost per candidate:     ${cost}",
        f"  candidates:             {candidates}",
        f"  grand total:            {candidates * total:,} queries, "
        f"${candidates * estimate_cost(total, price_per_query)}",
    ]
    return "\n".join(lines)
