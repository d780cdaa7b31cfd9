"""Figure rendering for sweep tables and single runs.

CSV/JSON remain the machine contract; these helpers draw the matching
matplotlib figures next to them (delay-vs-load curves per scheduler, and a
per-run delay timeline).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_sweep(points, out_path, fluid_bound_req_hr=None, title=None) -> None:
    """Mean delay versus load, one line per scheduler, log delay axis."""
    by_sched: dict[str, list] = {}
    for p in points:
        by_sched.setdefault(p.scheduler, []).append(p)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name in sorted(by_sched):
        rows = sorted(by_sched[name], key=lambda p: p.load_req_per_hour)
        loads = [p.load_req_per_hour for p in rows]
        delays = [p.mean_delay_s for p in rows]
        ax.plot(loads, delays, marker="o", label=name)
        sat = [(p.load_req_per_hour, p.mean_delay_s) for p in rows if p.saturated]
        if sat:
            ax.plot(*zip(*sat), linestyle="none", marker="x", color="black",
                    markersize=9)
    if fluid_bound_req_hr is not None:
        ax.axvline(fluid_bound_req_hr, linestyle="--", color="gray",
                   label="fluid bound")
    ax.set_xlabel("load (requests/hour)")
    ax.set_ylabel("mean delay (s)")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_run_delays(reservations, out_path, title=None) -> None:
    """Per-job delay against arrival time with a running mean."""
    rows = sorted(reservations, key=lambda r: r.arrival)
    arrivals = [r.arrival for r in rows]
    delays = [r.delay for r in rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(arrivals, delays, ".", markersize=3, alpha=0.5, label="job delay")
    if len(delays) >= 10:
        window = max(len(delays) // 50, 1)
        means, xs = [], []
        acc = 0.0
        for i, d in enumerate(delays):
            acc += d
            if i >= window:
                acc -= delays[i - window]
            if i >= window - 1:
                means.append(acc / window)
                xs.append(arrivals[i])
        ax.plot(xs, means, "-", linewidth=1.5, label=f"mean of {window}")
    ax.set_xlabel("arrival time (s)")
    ax.set_ylabel("delay (s)")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
