"""Render sweep rows to PNG files (headless Agg backend)."""

import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _num(v):
    return float(v)


def _truthy(v):
    return v is True or str(v).lower() == "true"


def render_sweep(rows, outdir):
    """Two figures: encode2 versus transpose time per K, and the crossover map.

    ``rows`` are dicts keyed by the sweep CSV columns (values may be strings
    as read back from the file). Returns the written paths.
    """
    os.makedirs(outdir, exist_ok=True)
    groups = defaultdict(list)
    for r in rows:
        K, P = int(r["K"]), int(r["P"])
        alpha, beta = _num(r["alpha"]), _num(r["beta"])
        t_enc = int(r["C1_encode2"]) * alpha + _num(r["C2_encode2"]) * beta
        t_tr = int(r["C1_transpose"]) * alpha + _num(r["C2_transpose"]) * beta
        groups[(K, int(r["N"]), alpha, beta)].append((P - K, t_enc, t_tr, _truthy(r["predicted_crossover"]),
                                                       _truthy(r["measured_crossover"])))
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for (K, N, alpha, beta), pts in sorted(groups.items()):
        pts.sort()
        r = [p[0] for p in pts]
        line, = ax.plot(r, [p[1] / p[2] for p in pts], marker="o", label=f"K={K}, N={N}")
        ax.axvline(math.log2(K) / 2, color=line.get_color(), linestyle=":", linewidth=1)
    ax.axhline(1.0, color="black", linewidth=0.8)
    ax.set_xlabel("parity nodes P - K")
    ax.set_ylabel("encode2 time / transpose time")
    ax.set_title("Coding overhead relative to one transpose")
    if groups:
        ax.legend(fontsize=8)
    fig.tight_layout()
    paths.append(os.path.join(outdir, "overhead_ratio.png"))
    fig.savefig(paths[-1], dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted(groups)
    for y, key in enumerate(keys):
        for r, _, _, pred, meas in groups[key]:
            ax.scatter(r, y, marker="o" if meas else "x", s=60,
                       color="tab:green" if pred == meas else "tab:red")
    ax.set_yticks(range(len(keys)))
    ax.set_yticklabels([f"K={k[0]} N={k[1]}" for k in keys], fontsize=8)
    ax.set_xlabel("parity nodes P - K")
    ax.set_title("Measured crossover (o: encode2 cheaper; red: disagrees with prediction)", fontsize=9)
    fig.tight_layout()
    paths.append(os.path.join(outdir, "crossover_map.png"))
    fig.savefig(paths[-1], dpi=120)
    plt.close(fig)
    return paths

