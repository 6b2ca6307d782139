"""Run reports and figure rendering.

The text report is the authoritative record of a cleaning run; figures
(PNG via matplotlib's Agg backend) are rendered next to whatever
delimited output a command writes, as a quick visual check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .detector import ALL_HEURISTICS


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


@dataclass
class RunReport:
    """Counts for one cleaning run; internally consistent by construction:
    records_parsed == pings_kept + pings_removed + duplicates_dropped."""

    lines_total: int = 0
    header_lines: int = 0
    records_parsed: int = 0
    records_skipped: int = 0
    duplicates_dropped: int = 0
    devices: int = 0
    pings_kept: int = 0
    pings_removed: int = 0
    removed_by: dict = field(default_factory=dict)  # (heuristic, pass) -> n
    devices_converged: int = 0
    wall_time_s: Optional[float] = None
    config_echo: list = field(default_factory=list)
    error_sample: list = field(default_factory=list)

    def removed_by_heuristic(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (h, _p), n in self.removed_by.items():
            out[h] = out.get(h, 0) + n
        return out

    def removed_by_pass(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for (_h, p), n in self.removed_by.items():
            out[p] = out.get(p, 0) + n
        return out

    @property
    def convergence_rate(self) -> float:
        return 1.0 if self.devices == 0 else self.devices_converged / self.devices

    def consistent(self) -> bool:
        return (self.records_parsed
                == self.pings_kept + self.pings_removed + self.duplicates_dropped
                and self.records_parsed + self.records_skipped
                == self.lines_total - self.header_lines
                and self.pings_removed == sum(self.removed_by.values()))

    def to_text(self, include_timing: bool = True) -> str:
        lines = ["osclean run report", "=" * 18]
        rows = [
            ("input lines", self.lines_total),
            ("header lines", self.header_lines),
            ("records parsed", self.records_parsed),
            ("records skipped", self.records_skipped),
            ("duplicates dropped", self.duplicates_dropped),
            ("devices", self.devices),
            ("pings kept", self.pings_kept),
            ("pings removed", self.pings_removed),
        ]
        for name, val in rows:
            lines.append(f"{name:<22} {val}")
        lines.append(f"{'convergence':<22} {self.devices_converged}/{self.devices} "
                     f"devices ({100 * self.convergence_rate:.1f}%)")
        if include_timing and self.wall_time_s is not None:
            lines.append(f"{'wall time':<22} {self.wall_time_s:.2f} s")

        lines.append("")
        lines.append("removals by heuristic and pass")
        passes = sorted(self.removed_by_pass()) or [1]
        header = f"  {'heuristic':<10}" + "".join(f"{'pass ' + str(p):>9}" for p in passes)
        lines.append(header + f"{'total':>9}")
        for h in ALL_HEURISTICS:
            per = [self.removed_by.get((h, p), 0) for p in passes]
            lines.append(f"  {h:<10}" + "".join(f"{n:>9}" for n in per)
                         + f"{sum(per):>9}")

        if self.error_sample:
            lines.append("")
            lines.append(f"first {len(self.error_sample)} record errors")
            for e in self.error_sample:
                lines.append(f"  {e}")

        if self.config_echo:
            lines.append("")
            lines.append("config")
            for k, v in self.config_echo:
                lines.append(f"  {k} = {v}")
        return "\n".join(lines) + "\n"


def render_removals_figure(report: RunReport, path) -> None:
    """Stacked bars: removals per heuristic, one color per pass."""
    plt = _plt()
    passes = sorted(report.removed_by_pass()) or [1]
    fig, ax = plt.subplots(figsize=(6, 4))
    bottoms = [0] * len(ALL_HEURISTICS)
    for p in passes:
        vals = [report.removed_by.get((h, p), 0) for h in ALL_HEURISTICS]
        ax.bar(ALL_HEURISTICS, vals, bottom=bottoms, label=f"pass {p}")
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    ax.set_ylabel("pings removed")
    ax.set_title(f"removals by heuristic ({report.pings_removed} of "
                 f"{report.records_parsed} pings)")
    if len(passes) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(points, parameter: str, path) -> None:
    """Removal count plus precision/recall as the threshold moves."""
    plt = _plt()
    xs = [p.value for p in points]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(xs, [p.removals for p in points], "o-", color="tab:blue",
            label="removals")
    ax.set_xlabel(parameter)
    ax.set_ylabel("pings removed", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(xs, [p.precision for p in points], "s--", color="tab:green",
             label="precision")
    ax2.plot(xs, [p.recall for p in points], "^--", color="tab:red",
             label="recall")
    ax2.set_ylabel("precision / recall")
    ax2.set_ylim(0, 1.05)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="center right")
    ax.set_title(f"threshold sensitivity: {parameter}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_figure(named_scores: dict, path) -> None:
    """Grouped bars comparing precision/recall/F1 across methods."""
    plt = _plt()
    metrics = ["precision", "recall", "f1"]
    names = list(named_scores)
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(names))
    for i, name in enumerate(names):
        s = named_scores[name]
        vals = [s.precision, s.recall, s.f1]
        xs = [j + i * width for j in range(len(metrics))]
        ax.bar(xs, vals, width=width, label=name)
    ax.set_xticks([j + width * (len(names) - 1) / 2 for j in range(len(metrics))])
    ax.set_xticklabels(metrics)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
