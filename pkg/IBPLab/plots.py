"""
IBPLab Plots Module
SVG figures of weight ingredients and report summaries (matplotlib, Agg).
"""

import os
from typing import Any, Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reports import ingredient_rows  # noqa: E402
from .utils.logger import get_logger  # noqa: E402

logger = get_logger("plots")

SVG_HASH_SALT = "ibplab"


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    # no timestamp and fixed clip-path ids in the SVG
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASH_SALT}):
        fig.savefig(path, format="svg", metadata={'Date': None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_ingredients(kind: str, ingredients, grid, path: str) -> str:
    """Curves of the deterministic ingredients (phi, psi, h', h~, Theta or Gamma, Theta, D) against t."""
    rows = ingredient_rows(kind, ingredients, grid)
    t = np.array([r['t'] for r in rows])
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in rows[0]:
        if key == 't':
            continue
        ax.plot(t, [r[key] for r in rows], label=key)
    ax.set_xlabel("t")
    ax.set_title(f"{kind} weight ingredients")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_report_summary(report: Dict[str, Any], path: str) -> str:
    """z-scores per test function with the +/- z_max band."""
    checks: List[Dict[str, Any]] = report.get('checks', [])
    labels = [c['label'] for c in checks]
    z = [c['z'] if np.isfinite(c['z']) else 0.0 for c in checks]
    colors = ['tab:green' if c['pass'] else 'tab:red' for c in checks]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(labels) + 2), 4))
    ax.bar(range(len(labels)), z, color=colors)
    ax.axhline(3.0, color='gray', linestyle='--', linewidth=0.8)
    ax.axhline(-3.0, color='gray', linestyle='--', linewidth=0.8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha='right', fontsize=8)
    ax.set_ylabel("z")
    ax.set_title(report.get('experiment', 'report'))
    fig.tight_layout()
    return _save(fig, path)


def plot_contraction(times, ratios, path: str) -> str:
    """Ratio of the coupled distance to its exponential envelope."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, ratios)
    ax.axhline(1.0, color='tab:red', linestyle='--', linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("|X^x - X^y| / envelope")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
