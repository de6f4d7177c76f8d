# modules/render.py

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from packcool.core.errors import InvalidArgumentError
from packcool.modules.environment import TrajectoryBuffer

logger = logging.getLogger("packcool.render")

plt.rcParams["svg.hashsalt"] = "packcool"
plt.rcParams["svg.fonttype"] = "none"

HEATMAP_CMAP = "coolwarm"
BAND_SCALE = 0.2
ALGO_COLORS = {"ppo": "#d62728", "hjbvi": "#1f77b4", "hjbppo": "#2ca02c"}
FLOAT_FMT = "%.17g"


def _save_svg(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray], fmt=FLOAT_FMT) -> Path:
    """Comma-separated table with one header row, '.' radix, newline-terminated rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c) for c in columns]) if columns else np.empty((0, 0))
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt)
    return path


def read_table(path: Path) -> Tuple[List[str], np.ndarray]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return header, data


def dump_trajectory(buffer: TrajectoryBuffer, out_dir: Path, dx: float) -> List[Path]:
    """
    sigma.csv (t, sigma), u.csv and w.csv (rows = time, columns = x) plus SVG
    renders: the sigma line plot and u / w heatmaps over (t, x).
    """
    if len(buffer) == 0:
        raise InvalidArgumentError("cannot dump an empty trajectory")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    times, sigmas, u_hist, w_hist = buffer.arrays()
    n_x = u_hist.shape[1]
    x_nodes = np.arange(1, n_x + 1) * dx
    x_header = [f"x={format(float(x), '.6g')}" for x in x_nodes]

    paths = [
        write_table(out_dir / "sigma.csv", ["t", "sigma"], [times, sigmas]),
        write_table(out_dir / "u.csv", x_header, list(u_hist.T)),
        write_table(out_dir / "w.csv", x_header, list(w_hist.T)),
    ]

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(times, sigmas, color="black", linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("sigma(t)")
    ax.set_ylim(-0.05, 1.05)
    _save_svg(fig, out_dir / "sigma.svg")
    paths.append(out_dir / "sigma.svg")

    for name, history in (("u", u_hist), ("w", w_hist)):
        limit = float(np.max(np.abs(history))) or 1.0
        fig, ax = plt.subplots(figsize=(7, 4))
        mesh = ax.pcolormesh(times, x_nodes, history.T, cmap=HEATMAP_CMAP, vmin=-limit, vmax=limit, shading="nearest")
        fig.colorbar(mesh, ax=ax, label=f"{name}(x, t)")
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        _save_svg(fig, out_dir / f"{name}.svg")
        paths.append(out_dir / f"{name}.svg")

    logger.info(f"[render] wrote trajectory of {len(buffer)} steps to {out_dir}")
    return paths


def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to `window` consecutive entries."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    cumsum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    start = np.maximum(idx - window, 0)
    return (cumsum[idx] - cumsum[start]) / (idx - start)


def rolling_std(values: np.ndarray, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.array([values[max(0, i + 1 - window): i + 1].std() for i in range(values.size)])


def merge_seed_curves(reward_logs: Sequence[np.ndarray], window: int = 20) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Smooth each seed's episode rewards with a trailing `window` mean, then take
    the mean and population std across seeds per episode. Logs are cut to the
    shortest one.
    """
    logs = [np.asarray(log, dtype=float) for log in reward_logs if len(log)]
    if not logs:
        raise InvalidArgumentError("no reward logs to merge")
    length = min(log.size for log in logs)
    smoothed = np.vstack([rolling_mean(log[:length], window) for log in logs])
    episodes = np.arange(1, length + 1)
    return episodes, smoothed.mean(axis=0), smoothed.std(axis=0)


def curve_band(mean: np.ndarray, std: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper edges of the shaded band, mean -/+ BAND_SCALE * std."""
    mean = np.asarray(mean, dtype=float)
    spread = BAND_SCALE * np.asarray(std, dtype=float)
    return mean - spread, mean + spread


def plot_curves(curves: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]], path: Path) -> Path:
    """Mean curve per algorithm with a band of BAND_SCALE standard deviations."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for index, algo in enumerate(sorted(curves)):
        episodes, mean, std = curves[algo]
        color = ALGO_COLORS.get(algo, f"C{index}")
        ax.plot(episodes, mean, color=color, label=algo, linewidth=1.0)
        low, high = curve_band(mean, std)
        ax.fill_between(episodes, low, high, color=color, alpha=0.25, linewidth=0)
    ax.set_xlabel("episode")
    ax.set_ylabel("average reward")
    ax.legend()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _save_svg(fig, path)
    return path
