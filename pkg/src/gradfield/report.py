"""Artifact emission: delimited output, JSON reports, and figures.

CSV floats are printed with 17 significant digits so re-parsing
round-trips bit-exactly; every CSV carries the config hash in its header
comments.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
from typing import Optional, Sequence

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence],
              comments: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        for k in sorted(comments or {}):
            fh.write(f"# {k} = {comments[k]}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    return str(obj)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def encode_array(arr: np.ndarray) -> dict:
    """Portable little-endian array snapshot for checkpoints."""
    arr = np.ascontiguousarray(arr)
    le = arr.astype(arr.dtype.newbyteorder("<"))
    return {"dtype": str(arr.dtype), "shape": list(arr.shape),
            "data": base64.b64encode(le.tobytes()).decode()}


def decode_array(snap: dict) -> np.ndarray:
    dt = np.dtype(snap["dtype"]).newbyteorder("<")
    raw = base64.b64decode(snap["data"])
    return np.frombuffer(raw, dtype=dt).reshape(snap["shape"]).astype(
        snap["dtype"])


# ---------------------------------------------------------------------------
# figures (one per experiment kind)

def _save(fig, outdir: str, name: str) -> str:
    path = os.path.join(outdir, name if name.endswith(".png")
                        else name + ".png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def figure_series(outdir: str, name: str, xs, ys, xlabel: str, ylabel: str,
                  title: str, yerr=None, extra_series=None) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    if yerr is not None:
        ax.errorbar(xs, ys, yerr=yerr, marker="o", capsize=3)
    else:
        ax.plot(xs, ys, marker="o")
    for label, exs, eys in (extra_series or []):
        ax.plot(exs, eys, marker="s", linestyle="--", label=label)
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, outdir, name)


def figure_bars(outdir: str, name: str, labels, values, ylabel: str,
                title: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(l) for l in labels], rotation=45, fontsize=7)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, outdir, name)


def figure_heatmap(outdir: str, name: str, matrix, xticks, yticks,
                   xlabel: str, ylabel: str, title: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(np.asarray(matrix), aspect="auto", origin="lower",
                   cmap="viridis")
    ax.set_xticks(range(len(xticks)))
    ax.set_xticklabels([str(t) for t in xticks], fontsize=7)
    ax.set_yticks(range(len(yticks)))
    ax.set_yticklabels([str(t) for t in yticks], fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, outdir, name)


def figure_hist(outdir: str, name: str, samples, xlabel: str, title: str,
                overlay=None) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(samples, bins=40, density=True, alpha=0.6, label="samples")
    if overlay is not None:
        label, xs, ys = overlay
        ax.plot(xs, ys, "r-", label=label)
    ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    return _save(fig, outdir, name)
