# mixgrad/plots.py
from collections.abc import Mapping
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mixgrad.errors import PlotError  # noqa: E402

# byte-stable SVG output for identical inputs
_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "mixgrad",
    "path.simplify": False,
}


def _xy(values) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(values, tuple) and len(values) == 2:
        x = np.asarray(values[0], dtype=float)
        y = np.asarray(values[1], dtype=float)
    else:
        y = np.asarray(values, dtype=float)
        x = np.arange(y.size, dtype=float)
    if y.ndim != 1 or x.shape != y.shape:
        raise PlotError("each series must be a 1-D sequence or an (x, y) pair of equal length")
    return x, y


def emit_plot(series: Mapping, path, title: str = "", xlabel: str = "", ylabel: str = "",
              log_y: bool = False) -> Path:
    """
    Write a self-contained SVG line chart, one stroked line per series and a
    legend naming them. series maps label -> y values or (x, y).
    """
    if not series:
        raise PlotError("nothing to plot: no series given")
    data = {}
    for name, values in series.items():
        x, y = _xy(values)
        if y.size == 0:
            raise PlotError(f"series {name!r} is empty")
        data[str(name)] = (x, y)

    out = Path(path)
    if not out.parent.exists():
        raise PlotError(f"cannot write plot: directory {out.parent} does not exist")

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        try:
            for name, (x, y) in data.items():
                ax.plot(x, y, label=name, marker="o" if y.size == 1 else None, linewidth=1.5)
            if log_y:
                ax.set_yscale("log")
            ax.set_title(title)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            ax.grid(True, alpha=0.3)
            ax.legend()
            fig.tight_layout()
            fig.savefig(out, format="svg", metadata={"Date": None})
        except OSError as e:
            raise PlotError(f"cannot write plot to {out}: {e}")
        finally:
            plt.close(fig)
    return out
