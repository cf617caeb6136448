"""Report emission: JSON + CSV always, optional raster plots."""

import csv
import json
from pathlib import Path


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def write_csv(path, rows: list, fieldnames: list | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def emit_report(results: dict, out_dir, name: str, rows: list | None = None,
                plots: dict | None = None) -> dict:
    """Write <name>.json (+ <name>.csv from rows, + plots/*.png).

    `plots` maps filename stem -> callable(ax) drawing onto a matplotlib
    axis; plotting is skipped silently only if matplotlib is missing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {"json": str(write_json(out_dir / f"{name}.json", results))}
    if rows is not None:
        written["csv"] = str(write_csv(out_dir / f"{name}.csv", rows))
    if plots:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plot_dir = out_dir / "plots"
        plot_dir.mkdir(exist_ok=True)
        for stem, draw in plots.items():
            fig, ax = plt.subplots(figsize=(6, 4))
            draw(ax)
            fig.tight_layout()
            target = plot_dir / f"{stem}.png"
            fig.savefig(target, dpi=120)
            plt.close(fig)
            written.setdefault("plots", []).append(str(target))
    return written


def plot_history(history_rows):
    def draw(ax):
        epochs = [r["epoch"] for r in history_rows]
        ax.plot(epochs, [r["train_total"] for r in history_rows], label="train")
        ax.plot(epochs, [r["val_total"] for r in history_rows], label="val")
        ax.set_xlabel("epoch")
        ax.set_ylabel("objective")
        ax.set_yscale("log")
        ax.legend()

    return draw


def plot_design_curve(history, key="loss"):
    def draw(ax):
        its = [r["iteration"] for r in history]
        ax.plot(its, [r[key] for r in history])
        ax.set_xlabel("design iteration")
        ax.set_ylabel(key)

    return draw


def plot_rollout_snapshot(pred_frames, gt_frames, frame: int):
    def draw(ax):
        if pred_frames.ndim == 3:  # [T, C, n_x] -> line plot
            ax.plot(gt_frames[frame, 0], label="solver")
            ax.plot(pred_frames[frame, 0], "--", label="surrogate")
            ax.legend()
        else:  # [T, C, n, n] -> image
            ax.imshow(pred_frames[frame, 0], origin="lower")
        ax.set_title(f"frame {frame}")

    return draw
