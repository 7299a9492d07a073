"""Static figures drawn only from the CSV files the CLI writes."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read(path):
    with open(path, encoding="utf-8") as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    data = np.genfromtxt(body, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def _summary(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# summary "):
                key, _, val = line[len("# summary "):].partition(" = ")
                out[key.strip()] = val.strip()
    return out


def plot_rate(csv_path, png_path):
    """Scaled gap (and sandwich curves, if present) against eps on log axes."""
    data = _read(csv_path)
    meta = _summary(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    eps = data["eps"]
    ax.plot(eps, data["scaled_gap"], "o-", label="solver")
    for key, style in (("lower", "v--"), ("upper", "^--")):
        if key in data and np.all(np.isfinite(data[key])):
            ax.plot(eps, data[key], style, label=key)
    for key, style in (("theoretical_constant", ":"), ("corrected_constant", "-.")):
        if key in meta:
            try:
                ax.axhline(float(meta[key]), ls=style, color="gray",
                           label=key.replace("_", " "))
            except ValueError:
                pass
    ax.set_xscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("(T_eps - W2^2) / eps^(2/(d+2))")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def plot_support(csv_path, png_path, bins=200):
    """Heatmap of plan support in the (x_1, y_1) plane."""
    data = _read(csv_path)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    h, xe, ye = np.histogram2d(data["x_1"], data["y_1"], bins=bins,
                               weights=data["density"])
    ax.imshow(np.log1p(h.T), origin="lower", extent=(xe[0], xe[-1], ye[0], ye[-1]),
              aspect="auto", cmap="magma")
    ax.set_xlabel("x_1")
    ax.set_ylabel("y_1")
    ax.set_title("plan support (log density)")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def plot_overlay(csv_path, png_path):
    """Plan cross-section against the Barenblatt profile(s)."""
    data = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(data["x_1"], data["plan"], "k.", ms=2, label="plan u(., y)")
    for key in ("v_matched", "v_printed"):
        if key in data:
            ax.plot(data["x_1"], data[key], label=key)
    ax.set_xlabel("x_1")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


KINDS = {"rate": plot_rate, "support": plot_support, "overlay": plot_overlay}
