"""
IBPLab Reports Module
Report emission: canonical JSON (sorted keys, fixed indentation, so
serialize -> parse -> serialize is byte-identical), CSV summaries, path
dumps and weight-ingredient tables.
"""

import csv
import json
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .ibp_weights import growth_factor
from .utils.logger import get_logger

logger = get_logger("reports")


def to_plain(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if hasattr(value, 'as_dict'):
        return to_plain(value.as_dict())
    return value


def dumps_report(report: Any) -> str:
    """Canonical JSON text of a report (or any as_dict-able value)."""
    return json.dumps(to_plain(report), sort_keys=True, indent=2) + "\n"


def loads_report(text: str) -> Dict[str, Any]:
    return json.loads(text)


def _ensure_dir(path: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


def write_json(report: Any, path: str) -> str:
    _ensure_dir(path)
    with open(path, "w") as f:
        f.write(dumps_report(report))
    logger.debug(f"Wrote {path}")
    return path


def summary_rows(report: Dict[str, Any]) -> List[Dict[str, Any]]:
    """One CSV row per paired check of an experiment report."""
    rows = []
    for check in report.get('checks', []):
        rows.append({
            'experiment': report.get('experiment'),
            'label': check['label'],
            'lhs_mean': check['lhs']['mean'],
            'lhs_se': check['lhs']['se'],
            'rhs_mean': check['rhs']['mean'],
            'rhs_se': check['rhs']['se'],
            'paired_mean': check['paired']['mean'],
            'paired_se': check['paired']['se'],
            'z': check['z'],
            'dt': check['dt'],
            'richardson_paired_mean': check['richardson_paired_mean'],
            'bias_allowance': check['bias_allowance'],
            'pass': check['pass'],
        })
    if not rows:
        rows.append({'experiment': report.get('experiment'), 'label': '', 'pass': report.get('pass')})
    return rows


def write_csv_rows(rows: Sequence[Dict[str, Any]], path: str) -> str:
    _ensure_dir(path)
    fieldnames: List[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, '') for k in fieldnames})
    return path


def write_report(report: Any, out_dir: str, fmt: str = 'json', name: Optional[str] = None) -> List[str]:
    """
    Write a report into ``out_dir``.

    Args:
        report: ExperimentReport or plain dict
        out_dir: output directory (created if missing)
        fmt: 'json' writes <name>.json; 'csv' additionally writes <name>.csv
        name: file stem; defaults to the experiment name

    Returns:
        Paths written
    """
    data = to_plain(report)
    stem = name or data.get('experiment', 'report')
    written = [write_json(data, os.path.join(out_dir, f"{stem}.json"))]
    if fmt == 'csv':
        written.append(write_csv_rows(summary_rows(data), os.path.join(out_dir, f"{stem}.csv")))
    return written


def dump_path_csv(times: np.ndarray, states: np.ndarray, path: str, prefix: str = "X") -> str:
    """Columns t, X_1..X_n for one path (states of shape (steps + 1, n))."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    header = ['t'] + [f"{prefix}_{i + 1}" for i in range(states.shape[-1])]
    rows = [dict(zip(header, [float(t)] + [float(v) for v in row])) for t, row in zip(times, states)]
    return write_csv_rows(rows, path)


def ingredient_rows(setup_kind: str, ingredients, grid) -> List[Dict[str, Any]]:
    """Per-node rows of the deterministic weight ingredients (first coordinate of each vector)."""
    rows = []
    times = grid.times
    if setup_kind == 'hamiltonian':
        pp = ingredients.pp
        for j, t in enumerate(times):
            rows.append({
                't': float(t),
                'phi': float(pp.phi(t)),
                'psi': float(pp.psi(t)),
                'hprime': float(ingredients.hprime_table[j][0]),
                'htilde': float(ingredients.htilde_table[j][0]),
                'Theta_x': float(ingredients.theta_x_table[j][0]),
            })
    elif setup_kind == 'delay':
        m = ingredients.m
        for j, t in enumerate(times):
            rows.append({
                't': float(t),
                'Gamma': float(ingredients.gamma_table[j][0]),
                'Theta': float(ingredients.theta_table[j][0]),
                'D': float(ingredients.perturbation_table[j + m][0]),
            })
    else:
        k = ingredients
        for t in times:
            row = {'t': float(t)}
            for i, _, lam in k.eigen_pairs():
                row[f"g_{i + 1}"] = float(growth_factor(lam, t, grid.T))
            rows.append(row)
    return rows


def dump_ingredients_csv(setup_kind: str, ingredients, grid, path: str) -> str:
    return write_csv_rows(ingredient_rows(setup_kind, ingredients, grid), path)
