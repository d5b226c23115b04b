"""Plain-text reports and matplotlib figures for CLI runs.

Text reports are ``key=value`` lines so they diff cleanly. Figures are
optional PNGs written next to them; none of them carry timestamps.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .guest import BRIDGE_GROUPS  # noqa: E402
from .memcrypt import PAGE_SIZE  # noqa: E402
from .tweak import BLOCK, FIRST_BIT  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}
# keep PNG bytes stable between runs
_PNG_META = {"Software": None}


def kv_lines(pairs) -> str:
    items = pairs.items() if isinstance(pairs, dict) else pairs
    return "".join(f"{k}={'-' if v is None else v}\n" for k, v in items)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_bridge_scan(dump: bytes, bridge_offset: int, bpa: int | None, path) -> Path:
    """Per page: length of the equal-ciphertext run starting at the bridge offset."""
    blocks = np.frombuffer(dump, dtype=np.uint8).reshape(-1, PAGE_SIZE // BLOCK, BLOCK)
    first = bridge_offset // BLOCK
    region = blocks[:, first : first + BRIDGE_GROUPS]
    same = np.all(region == region[:, :1], axis=2)
    # leading run of True per page
    run = np.where(same.all(axis=1), BRIDGE_GROUPS, np.argmin(same, axis=1))

    with plt.rc_context(_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 3.4), gridspec_kw={"width_ratios": [3, 1]})
        ax0.plot(np.arange(run.size), run, lw=0.8, color="0.3")
        ax0.axhline(BRIDGE_GROUPS, ls="--", lw=0.8, color="tab:red")
        ax0.set_xlabel("page index")
        ax0.set_ylabel(f"equal blocks from offset {bridge_offset:#x}")
        ax0.set_title("bridge scan over the ciphertext dump")
        if bpa is not None:
            page = bpa // PAGE_SIZE
            ax0.annotate(f"BPA {bpa:#x}", (page, BRIDGE_GROUPS), textcoords="offset points",
                         xytext=(6, -12), fontsize=8, color="tab:red")
            ref = blocks[page, first]
            grid = np.all(blocks[page] == ref, axis=1).reshape(16, 16)
            ax1.imshow(grid, cmap="Greys", interpolation="nearest")
            ax1.set_title("bridge page blocks\nequal to slot 1")
        ax1.set_xticks([])
        ax1.set_yticks([])
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_cc_search(candidates: int, batch_width: int, rounds: int, found_at: int | None, path) -> Path:
    total_rounds = -(-candidates // batch_width)
    x = np.arange(1, total_rounds + 1)
    covered = np.minimum(x * batch_width, candidates)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.4))
        ax.step(x, covered, where="post", color="0.6", label="candidates covered")
        if rounds:
            ax.step(x[:rounds], covered[:rounds], where="post", color="tab:blue", lw=1.6,
                    label="rounds used")
        if found_at is not None:
            ax.scatter([rounds], [found_at + 1], color="tab:red", zorder=3, label="CC match")
        ax.set_xlabel(f"injection round ({batch_width} candidates each)")
        ax.set_ylabel("candidate pages")
        ax.set_title("characteristic code search")
        ax.legend(frameon=False, loc="upper left")
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_randomness(results, path) -> Path:
    names = [r.name for r in results]
    p = [r.p_value for r in results]
    alpha = results[0].alpha if results else 0.01
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        colors = ["tab:green" if r.passed else "tab:red" for r in results]
        ax.bar(names, p, color=colors)
        ax.axhline(alpha, ls="--", color="k", lw=0.8)
        ax.text(len(names) - 0.5, alpha, f" alpha={alpha}", va="bottom", ha="right", fontsize=8)
        ax.set_ylim(0, 1)
        ax.set_ylabel("p-value")
        ax.set_title("ciphertext randomness at one address")
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_tweak_table(table, path) -> Path:
    bits = np.unpackbits(table.as_array(), axis=1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 2.8))
        ax.imshow(bits, cmap="Greys", aspect="auto", interpolation="nearest")
        ax.set_yticks(range(0, bits.shape[0], 5))
        ax.set_yticklabels([f"t{FIRST_BIT + i}" for i in range(0, bits.shape[0], 5)])
        ax.set_xlabel("bit of tweak vector")
        ax.set_title("tweak table")
        fig.tight_layout()
        return _save(fig, Path(path))
