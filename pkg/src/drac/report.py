"""Figures for a run: per-DRAC service timeline and channel outcome counts."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from drac.engine import TraceEvent  # noqa: E402

MARKERS = {"message_sent": ">", "message_delivered": "o", "message_lost": "x",
           "contract_violation": "X", "operator_alert": "!", "markdown_recorded": "s"}


def service_spans(trace: Sequence[TraceEvent]) -> list[tuple[str, str, int, int]]:
    open_, spans = {}, []
    for ev in trace:
        if ev.kind == "service_started":
            open_[(ev.drac, ev.subject)] = ev.time
        elif ev.kind == "service_completed":
            start = open_.pop((ev.drac, ev.subject), ev.time)
            spans.append((ev.drac, ev.subject, start, ev.time))
    return spans


def timeline_figure(trace: Sequence[TraceEvent], path, title: str = "") -> Path:
    spans = service_spans(trace)
    lanes = sorted({d for d, *_ in spans} | {e.drac for e in trace if e.kind in MARKERS})
    fig, ax = plt.subplots(figsize=(11, 1.2 + 0.8 * max(1, len(lanes))))
    for d, s, a, b in spans:
        y = lanes.index(d)
        ax.barh(y, max(b - a, 1), left=a, height=0.5, alpha=0.7)
    for kind, m in MARKERS.items():
        pts = [(e.time, lanes.index(e.drac)) for e in trace if e.kind == kind and e.drac in lanes]
        if pts:
            xs, ys = zip(*pts)
            ax.scatter(xs, [y + 0.35 for y in ys], marker="$!$" if m == "!" else m, label=kind, zorder=3)
    ax.set_yticks(range(len(lanes)), lanes)
    ax.set_xlabel("simulated minutes")
    ax.set_title(title or "service timeline")
    if any(e.kind in MARKERS for e in trace):
        ax.legend(loc="upper left", fontsize="small", ncol=3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out


def channel_figure(counts: dict, path, title: str = "") -> Path:
    states = ["delivered", "lost", "in_flight", "resent_as", "abandoned"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(states, [counts.get(s, 0) for s in states])
    ax.set_ylabel("messages")
    ax.set_title(title or "fax outcomes")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
