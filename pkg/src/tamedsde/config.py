"""Experiment configuration: a single TOML file with nested sections.

Sections (see the bundled files under ``configs/`` for working examples):

  [model]       name = "three-half" | "ginzburg-landau" | "linear",
                plus model parameters (lam, mu, xi, x0, a, c, ...)
  [taming]      kind = "identity" | "model1" | "model2"; alpha; l
                (l defaults to the model certificate's growth degree)
  [grid]        horizon, resolutions = [..], reference_resolution
  [montecarlo]  paths, master_seed, batch_size, threads
  [norms]       strong = [..], uniform = [..], t_eval, against_exact,
                moments = [..], one_step = [..], as_rate_kappa,
                b1_radius, b1_resolutions,
                assert (sub-table): strong_order = [lo, hi],
                uniform_order = [lo, hi], max_order_se
  [output]      directory (overridable via TAMEDSDE_OUTPUT_DIR)

Every resolution must divide the reference resolution exactly (required for
increment aggregation) and the reference must be strictly finer than the
largest resolution.
"""
from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import TamingScheme
from .models import MODELS, ModelSpec, get_model


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    model_name: str
    model_params: dict
    scheme: TamingScheme
    horizon: float
    resolutions: tuple[int, ...]
    reference_resolution: int
    path_count: int
    master_seed: int
    batch_size: int = 2048
    threads: int = 0  # 0: leave the backend's default parallel degree
    strong_ps: tuple[float, ...] = (2.0,)
    uniform_qs: tuple[float, ...] = ()
    t_eval: str = "terminal"
    against_exact: bool = False
    moment_ps: tuple[float, ...] = ()
    one_step_ps: tuple[float, ...] = ()
    as_rate_kappa: float | None = None
    b1_radius: float | None = None
    b1_resolutions: tuple[int, ...] = ()
    assert_strong_order: tuple[float, float] | None = None
    assert_uniform_order: tuple[float, float] | None = None
    assert_max_order_se: float | None = None
    output_dir: str = "out"

    def build_model(self) -> ModelSpec:
        spec = get_model(self.model_name, **self.model_params)
        if self.horizon != spec.problem.horizon:
            problem = dataclasses.replace(spec.problem, horizon=self.horizon)
            spec = dataclasses.replace(spec, problem=problem)
        return spec

    @property
    def wants_rate_assertion(self) -> bool:
        return (self.assert_strong_order is not None
                or self.assert_uniform_order is not None)


def _section(data: dict, name: str, required: bool = True) -> dict:
    sec = data.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _take(sec: dict, section: str, key: str, types, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key} is required")
        return default
    val = sec.pop(key)
    if not isinstance(val, types) or isinstance(val, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        raise ConfigError(f"{section}.{key} has the wrong type")
    return val


def _window(sec, section, key):
    val = sec.pop(key, None)
    if val is None:
        return None
    if (not isinstance(val, list) or len(val) != 2
            or not all(isinstance(v, (int, float)) for v in val)
            or not val[0] < val[1]):
        raise ConfigError(f"{section}.{key} must be a two-element [low, high] list")
    return (float(val[0]), float(val[1]))


def _float_list(sec, section, key):
    val = sec.pop(key, None)
    if val is None:
        return ()
    if not isinstance(val, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in val
    ):
        raise ConfigError(f"{section}.{key} must be a list of positive numbers")
    return tuple(float(v) for v in val)


def _int_list(sec, section, key, required=False):
    val = sec.pop(key, None)
    if val is None:
        if required:
            raise ConfigError(f"{section}.{key} is required")
        return ()
    if not isinstance(val, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in val
    ):
        raise ConfigError(f"{section}.{key} must be a list of positive integers")
    return tuple(int(v) for v in val)


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file does not parse: {exc}")
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    model_sec = _section(raw, "model")
    name = _take(model_sec, "model", "name", str, required=True)
    if name not in MODELS:
        raise ConfigError(
            f"model.name: unknown model {name!r}; available: {', '.join(sorted(MODELS))}"
        )
    model_params = dict(model_sec)  # remaining keys are model parameters
    try:
        spec = get_model(name, **model_params)
    except TypeError as exc:
        raise ConfigError(f"model parameters invalid for {name!r}: {exc}")
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"model parameters invalid for {name!r}: {exc}")

    tame_sec = _section(raw, "taming")
    kind = _take(tame_sec, "taming", "kind", str, required=True)
    alpha = float(_take(tame_sec, "taming", "alpha", (int, float), default=0.5))
    l = tame_sec.pop("l", None)
    if tame_sec:
        raise ConfigError(f"taming: unknown keys {sorted(tame_sec)}")
    try:
        if kind == "model2":
            l_val = float(l) if l is not None else float(spec.certificate.l)
            scheme = TamingScheme(kind, alpha, l_val)
        else:
            scheme = TamingScheme(kind, alpha)
    except ValueError as exc:
        raise ConfigError(f"taming: {exc}")

    grid_sec = _section(raw, "grid")
    horizon = float(_take(grid_sec, "grid", "horizon", (int, float), default=1.0))
    if horizon <= 0:
        raise ConfigError("grid.horizon must be positive")
    resolutions = _int_list(grid_sec, "grid", "resolutions", required=True)
    if list(resolutions) != sorted(set(resolutions)):
        raise ConfigError("grid.resolutions must be strictly increasing")
    reference = _take(grid_sec, "grid", "reference_resolution", int, required=True)
    if reference <= max(resolutions):
        raise ConfigError(
            f"grid.reference_resolution must exceed the largest resolution {max(resolutions)}"
        )
    for n in resolutions:
        if reference % n != 0:
            raise ConfigError(
                f"grid.resolutions: {n} does not divide {reference}"
            )
    if grid_sec:
        raise ConfigError(f"grid: unknown keys {sorted(grid_sec)}")

    mc_sec = _section(raw, "montecarlo")
    paths = _take(mc_sec, "montecarlo", "paths", int, required=True)
    if paths < 1:
        raise ConfigError("montecarlo.paths must be >= 1")
    master_seed = _take(mc_sec, "montecarlo", "master_seed", int, required=True)
    if not 0 <= master_seed < 2 ** 64:
        raise ConfigError("montecarlo.master_seed must fit in an unsigned 64-bit integer")
    batch_size = _take(mc_sec, "montecarlo", "batch_size", int, default=2048)
    if batch_size < 1:
        raise ConfigError("montecarlo.batch_size must be >= 1")
    threads = _take(mc_sec, "montecarlo", "threads", int, default=0)
    if threads < 0:
        raise ConfigError("montecarlo.threads must be >= 0")
    if mc_sec:
        raise ConfigError(f"montecarlo: unknown keys {sorted(mc_sec)}")

    norms_sec = _section(raw, "norms", required=False)
    strong_ps = _float_list(norms_sec, "norms", "strong") or (2.0,)
    uniform_qs = _float_list(norms_sec, "norms", "uniform")
    t_eval = _take(norms_sec, "norms", "t_eval", str, default="terminal")
    if t_eval not in ("terminal", "grid"):
        raise ConfigError("norms.t_eval must be 'terminal' or 'grid'")
    against_exact = bool(norms_sec.pop("against_exact", False))
    if against_exact and spec.exact_solution is None:
        raise ConfigError(f"norms.against_exact: model {name!r} has no exact solution")
    moment_ps = _float_list(norms_sec, "norms", "moments")
    one_step_ps = _float_list(norms_sec, "norms", "one_step")
    as_rate_kappa = norms_sec.pop("as_rate_kappa", None)
    if as_rate_kappa is not None:
        as_rate_kappa = float(as_rate_kappa)
        if as_rate_kappa <= 0:
            raise ConfigError("norms.as_rate_kappa must be positive")
    b1_radius = norms_sec.pop("b1_radius", None)
    if b1_radius is not None:
        b1_radius = float(b1_radius)
        if b1_radius <= 0:
            raise ConfigError("norms.b1_radius must be positive")
    b1_resolutions = _int_list(norms_sec, "norms", "b1_resolutions")
    if b1_radius is not None and len(b1_resolutions) < 3:
        raise ConfigError("norms.b1_resolutions needs at least 3 entries for a slope")
    assert_sec = norms_sec.pop("assert", {})
    if not isinstance(assert_sec, dict):
        raise ConfigError("norms.assert must be a table")
    assert_sec = dict(assert_sec)
    strong_window = _window(assert_sec, "norms.assert", "strong_order")
    uniform_window = _window(assert_sec, "norms.assert", "uniform_order")
    max_se = assert_sec.pop("max_order_se", None)
    if max_se is not None:
        max_se = float(max_se)
        if max_se <= 0:
            raise ConfigError("norms.assert.max_order_se must be positive")
    if assert_sec:
        raise ConfigError(f"norms.assert: unknown keys {sorted(assert_sec)}")
    if norms_sec:
        raise ConfigError(f"norms: unknown keys {sorted(norms_sec)}")

    out_sec = _section(raw, "output", required=False)
    directory = _take(out_sec, "output", "directory", str, default="out")
    directory = os.environ.get("TAMEDSDE_OUTPUT_DIR", directory)
    if out_sec:
        raise ConfigError(f"output: unknown keys {sorted(out_sec)}")

    known = {"model", "taming", "grid", "montecarlo", "norms", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    return ExperimentConfig(
        model_name=name, model_params=model_params, scheme=scheme,
        horizon=horizon, resolutions=resolutions, reference_resolution=reference,
        path_count=paths, master_seed=master_seed, batch_size=batch_size,
        threads=threads, strong_ps=strong_ps, uniform_qs=uniform_qs,
        t_eval=t_eval, against_exact=against_exact, moment_ps=moment_ps,
        one_step_ps=one_step_ps, as_rate_kappa=as_rate_kappa,
        b1_radius=b1_radius, b1_resolutions=b1_resolutions,
        assert_strong_order=strong_window, assert_uniform_order=uniform_window,
        assert_max_order_se=max_se, output_dir=directory,
    )
