"""
IBPLab Configuration Manager
Loads experiment settings (JSON), merges them over DEFAULT_SETTINGS,
validates them and resolves every cross-reference into an ExperimentConfig.
"""

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from IBPLab.cylinder import CylinderFunction, cylinder_from_spec, default_dictionary
from IBPLab.drift_models import PositionDrift, SegmentDriftModel, mollify_directional, registry_get
from IBPLab.errors import ConfigError, IBPLabError
from IBPLab.ibp_weights import EigenDirection
from IBPLab.simulate import ModelBinding, SimGrid
from IBPLab.spectral_core import SigmaOperator, SpectralOperator
from IBPLab.utils.logger import get_logger

logger = get_logger("config")

CONFIG_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.json")

MODEL_CLASSES = ('semilinear', 'hamiltonian', 'delay')
OUTPUT_FORMATS = ('json', 'csv')

DEFAULT_SETTINGS: Dict[str, Any] = {
    "model": "semilinear",
    "operator": {"dim": 1, "eigenvalues": {"rule": "power", "p": 2.0, "scale": 1.0}},
    "sigma": {"scale": 1.0},
    "drift": {"name": "zero", "params": {}, "mollify": None},
    "direction": {"coefficients": None},
    "initial": None,
    "hamiltonian": {"B": None, "k1": None, "k2": None},
    "delay": {"tau": 0.5, "eta": {"profile": "ramp", "coefficients": None}},
    "grid": {"T": 1.0, "steps": 1024},
    "mc": {"paths": 100000, "seed": 20240601, "chunk_paths": 256, "richardson": True, "progress": True},
    "functions": None,
    "tolerances": {"z_max": 3.0, "kappa_min": 0.0},
    "invariance": {"samples": 10000, "dt": 0.01, "t": 1.0, "source": "auto", "burn_in": None,
                   "gap": None, "chains": 256, "cov_rtol": 0.05},
    "fomin": {"directions": None, "T": None, "steps": 256},
    "contraction": {"x0": None, "y0": None, "kappa": 1.0},
    "girsanov": {"eps": [0.1, 0.05], "paths": 20000},
    "oracle": {"points_per_axis": 21, "half_width": 3.0},
    "output": {"dir": "results", "format": "json", "dump_paths": 0, "plots": False},
}


def _merge(defaults: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_settings(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load a settings file and merge it over the defaults.

    Args:
        path: JSON file; None reads config.json next to this module if present

    Returns:
        Merged settings dictionary

    Raises:
        ConfigError: the file is missing (when given explicitly) or not valid JSON
    """
    if path is None:
        if not os.path.exists(CONFIG_FILE):
            return copy.deepcopy(DEFAULT_SETTINGS)
        path = CONFIG_FILE
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", field="config")
    with open(path, "r") as f:
        try:
            settings = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}", field="config") from exc
    if not isinstance(settings, dict):
        raise ConfigError("top-level JSON value must be an object", field="config")
    unknown = sorted(set(settings) - set(DEFAULT_SETTINGS))
    if unknown:
        raise ConfigError(f"unknown sections {unknown}", field="config")
    return _merge(DEFAULT_SETTINGS, settings)


def save_settings(settings: Dict[str, Any], path: Optional[str] = None):
    with open(path or CONFIG_FILE, "w") as f:
        json.dump(settings, f, indent=4, sort_keys=True)


def get_setting(settings: Dict[str, Any], key: str, default=None):
    """Dotted lookup, e.g. get_setting(s, 'mc.paths')."""
    node: Any = settings
    for part in key.split('.'):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def config_hash(settings: Dict[str, Any]) -> str:
    """First 16 hex digits of the sha256 of the canonical JSON form."""
    canonical = json.dumps(settings, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


@dataclass(frozen=True)
class MCSettings:
    paths: int
    seed: int
    chunk_paths: int
    richardson: bool
    progress: bool


@dataclass(frozen=True)
class Tolerances:
    z_max: float
    kappa_min: float


@dataclass
class ExperimentConfig:
    """Validated experiment: resolved operators, drift, model binding and test functions."""
    model: str
    op: SpectralOperator
    sig: SigmaOperator
    binding: ModelBinding
    grid: SimGrid
    mc: MCSettings
    tolerances: Tolerances
    functions: List[CylinderFunction]
    initial: np.ndarray
    direction: Optional[np.ndarray]
    hamiltonian: Dict[str, Any]
    delay: Dict[str, Any]
    invariance: Dict[str, Any]
    fomin: Dict[str, Any]
    contraction: Dict[str, Any]
    girsanov: Dict[str, Any]
    oracle: Dict[str, Any]
    output: Dict[str, Any]
    settings: Dict[str, Any] = field(repr=False, default_factory=dict)

    @property
    def drift(self):
        return self.binding.drift

    @property
    def hash(self) -> str:
        return config_hash(self.settings)

    def with_overrides(self, **sections) -> 'ExperimentConfig':
        """Re-validate with some settings replaced, e.g. with_overrides(mc={'paths': 100})."""
        return validate_config(_merge(self.settings, sections))


def _require(condition: bool, message: str, field_name: str):
    if not condition:
        raise ConfigError(message, field=field_name)


def _vector(values, dim: int, field_name: str) -> np.ndarray:
    try:
        vec = np.asarray(values, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a list of numbers, got {values!r}", field=field_name) from exc
    _require(vec.shape[0] == dim, f"expected {dim} entries, got {vec.shape[0]}", field_name)
    _require(bool(np.all(np.isfinite(vec))), "entries must be finite", field_name)
    return vec


def _unit(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[0] = 1.0
    return e


def build_operator(section: Dict[str, Any]) -> SpectralOperator:
    """SpectralOperator from {'dim', 'eigenvalues': {'rule': 'power', 'p', 'scale'} | {'values'}}."""
    spec = section.get('eigenvalues') or {}
    if 'values' in spec:
        op = SpectralOperator.from_values(spec['values'])
        dim = section.get('dim')
        _require(dim is None or int(dim) == op.dim, f"dim {dim} disagrees with {op.dim} eigenvalues",
                 "operator.dim")
        return op
    _require(spec.get('rule', 'power') == 'power', f"unknown eigenvalue rule {spec.get('rule')!r}",
             "operator.eigenvalues.rule")
    dim = section.get('dim')
    _require(isinstance(dim, int) and dim >= 1, f"dim must be a positive integer, got {dim!r}", "operator.dim")
    return SpectralOperator.from_power_rule(dim, p=float(spec.get('p', 2.0)), scale=float(spec.get('scale', 1.0)))


def build_sigma(section: Dict[str, Any], dim: int) -> SigmaOperator:
    """SigmaOperator from {'diag'}, {'diag_rule': 'power', 'p'}, {'matrix'} or {'scale'}."""
    if 'matrix' in section:
        mat = np.atleast_2d(np.asarray(section['matrix'], dtype=float))
        _require(mat.shape == (dim, dim), f"sigma matrix must be {dim}x{dim}, got {mat.shape}", "sigma.matrix")
        return SigmaOperator(mat)
    if 'diag' in section:
        return SigmaOperator.from_diagonal(_vector(section['diag'], dim, "sigma.diag"))
    if 'diag_rule' in section:
        _require(section['diag_rule'] == 'power', f"unknown diag_rule {section['diag_rule']!r}", "sigma.diag_rule")
        p = float(section.get('p', -0.5))
        return SigmaOperator.from_diagonal(np.arange(1, dim + 1, dtype=float) ** p)
    return SigmaOperator.identity(dim, float(section.get('scale', 1.0)))


def _build_functions(entries, binding: ModelBinding, tau: Optional[float]) -> List[CylinderFunction]:
    n = binding.op.dim
    state_dim = n + binding.position_dim
    if entries is None:
        if binding.kind == 'delay':
            e0 = _unit(n)
            return [
                CylinderFunction('linear', e0, thetas=[0.0], label='x(0)'),
                CylinderFunction('sin', e0, thetas=[-tau], label='sin x(-tau)'),
                CylinderFunction('gauss', np.vstack([e0, e0]), thetas=[0.0, -0.5 * tau], label='gauss(x(0),x(-tau/2))'),
            ]
        return default_dictionary(state_dim)
    _require(isinstance(entries, list) and entries, "functions must be a non-empty list", "functions")
    functions = [cylinder_from_spec(entry, state_dim) for entry in entries]
    for fn in functions:
        if binding.kind == 'delay':
            _require(fn.is_segment, f"function '{fn.label}' needs 'thetas' for a delay model", "functions")
            _require(bool(np.all(fn.thetas >= -tau - 1e-12)), f"function '{fn.label}' reaches before -tau",
                     "functions.thetas")
        else:
            _require(not fn.is_segment, f"function '{fn.label}' has lags but the model has none", "functions")
    labels = [fn.label for fn in functions]
    _require(len(set(labels)) == len(labels), f"function labels must be unique, got {labels}", "functions")
    return functions


def _build_drift(settings: Dict[str, Any], kind: str, op: SpectralOperator, direction: Optional[np.ndarray],
                 tau: Optional[float]):
    section = settings['drift']
    params = dict(section.get('params') or {})
    name = section.get('name', 'zero')
    if kind == 'delay' and name == 'delay_terminal':
        params.setdefault('tau', tau)
    drift = registry_get(name, params, op.dim, op)
    if isinstance(drift, SegmentDriftModel) and kind != 'delay':
        raise ConfigError(f"drift '{name}' acts on segments; use model 'delay'", field="drift.name")
    mollify = section.get('mollify')
    if mollify:
        _require(kind == 'semilinear', "mollified drifts are supported for semilinear runs", "drift.mollify")
        eps = float(mollify.get('eps', 0.0))
        _require(eps > 0, "mollify.eps must be > 0", "drift.mollify.eps")
        drift = mollify_directional(drift, direction, eps, int(mollify.get('nodes', 21)))
    if kind == 'hamiltonian' and not isinstance(drift, SegmentDriftModel) and drift.in_dim == op.dim:
        drift = PositionDrift(drift)
    return drift


def validate_config(settings: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate merged settings and resolve them.

    Args:
        settings: output of load_settings (or any dict with the same schema)

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: naming the offending field
    """
    settings = _merge(DEFAULT_SETTINGS, settings)
    kind = settings['model']
    _require(kind in MODEL_CLASSES, f"model must be one of {MODEL_CLASSES}, got {kind!r}", "model")

    try:
        op = build_operator(settings['operator'])
        n = op.dim
        sig = build_sigma(settings['sigma'] or {}, n)

        grid_section = settings['grid']
        grid = SimGrid(float(grid_section['T']), int(grid_section['steps']))

        coeffs = settings['direction'].get('coefficients')
        direction = _unit(n) if coeffs is None else _vector(coeffs, n, "direction.coefficients")
        if kind == 'semilinear':
            EigenDirection(direction, op)

        tau = None
        delay = dict(settings['delay'])
        if kind == 'delay':
            tau = float(delay.get('tau', 0.0))
            _require(tau > 0, "tau must be > 0", "delay.tau")
            _require(grid.T > tau, f"delay IBP needs T > tau, got T={grid.T}, tau={tau}", "grid.T")
            eta = dict(delay.get('eta') or {})
            eta['coefficients'] = (_unit(n) if eta.get('coefficients') is None
                                   else _vector(eta['coefficients'], n, "delay.eta.coefficients")).tolist()
            eta.setdefault('profile', 'ramp')
            delay['eta'] = eta
            delay['tau'] = tau

        ham = dict(settings['hamiltonian'])
        B = None
        if kind == 'hamiltonian':
            B = np.eye(n) if ham.get('B') is None else np.atleast_2d(np.asarray(ham['B'], dtype=float))
            _require(B.ndim == 2 and B.shape[1] == n, f"B must have {n} columns, got {B.shape}", "hamiltonian.B")
            nx = B.shape[0]
            ham['B'] = B.tolist()
            ham['k1'] = (_unit(nx) if ham.get('k1') is None else _vector(ham['k1'], nx, "hamiltonian.k1")).tolist()
            ham['k2'] = (_unit(n) if ham.get('k2') is None else _vector(ham['k2'], n, "hamiltonian.k2")).tolist()

        drift = _build_drift(settings, kind, op, direction, tau)
        binding = ModelBinding(kind=kind, op=op, sig=sig, drift=drift, B=B, tau=tau)

        state_dim = n + binding.position_dim
        initial = settings.get('initial')
        initial = np.zeros(state_dim if kind != 'delay' else n) if initial is None else \
            _vector(initial, state_dim if kind != 'delay' else n, "initial")

        functions = _build_functions(settings.get('functions'), binding, tau)

        mc = settings['mc']
        paths, seed, chunk = int(mc['paths']), int(mc['seed']), int(mc['chunk_paths'])
        _require(paths >= 1, "paths must be >= 1", "mc.paths")
        _require(0 <= seed < 2 ** 64, "seed must be a 64-bit unsigned integer", "mc.seed")
        _require(chunk >= 1, "chunk_paths must be >= 1", "mc.chunk_paths")
        mc_settings = MCSettings(paths=paths, seed=seed, chunk_paths=chunk,
                                 richardson=bool(mc.get('richardson', True)), progress=bool(mc.get('progress', True)))

        tol = settings['tolerances']
        tolerances = Tolerances(z_max=float(tol['z_max']), kappa_min=float(tol['kappa_min']))
        _require(tolerances.z_max > 0, "z_max must be > 0", "tolerances.z_max")
        _require(tolerances.kappa_min >= 0, "kappa_min must be >= 0", "tolerances.kappa_min")

        invariance = dict(settings['invariance'])
        _require(invariance.get('source') in ('auto', 'sampler', 'reference', 'gibbs'),
                 "source must be auto, sampler, reference or gibbs", "invariance.source")
        _require(float(invariance['dt']) > 0, "dt must be > 0", "invariance.dt")

        fomin = dict(settings['fomin'])
        dirs = fomin.get('directions')
        fomin['directions'] = [direction.tolist()] if dirs is None else \
            [_vector(d, n, "fomin.directions").tolist() for d in dirs]

        contraction = dict(settings['contraction'])
        contraction['x0'] = (_unit(n) if contraction.get('x0') is None
                             else _vector(contraction['x0'], n, "contraction.x0")).tolist()
        contraction['y0'] = (-_unit(n) if contraction.get('y0') is None
                             else _vector(contraction['y0'], n, "contraction.y0")).tolist()

        girsanov = dict(settings['girsanov'])
        eps_values = [float(e) for e in girsanov.get('eps') or []]
        _require(len(eps_values) >= 1 and all(e > 0 for e in eps_values), "eps values must be > 0", "girsanov.eps")
        girsanov['eps'] = eps_values

        output = dict(settings['output'])
        _require(output.get('format') in OUTPUT_FORMATS, f"format must be one of {OUTPUT_FORMATS}", "output.format")
    except ConfigError:
        raise
    except IBPLabError as exc:
        raise ConfigError(str(exc), field="config") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed settings: {exc}", field="config") from exc

    logger.debug(f"Validated {kind} configuration (n={n}, T={grid.T}, steps={grid.steps})")
    return ExperimentConfig(model=kind, op=op, sig=sig, binding=binding, grid=grid, mc=mc_settings,
                            tolerances=tolerances, functions=functions, initial=initial,
                            direction=direction, hamiltonian=ham, delay=delay, invariance=invariance,
                            fomin=fomin, contraction=contraction, girsanov=girsanov,
                            oracle=dict(settings['oracle']), output=output, settings=settings)


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    return validate_config(load_settings(path))
