"""Run configuration: INI parsing, defaults, and the posterior binding.

A run config bundles the simulation frame, boundary conditions,
assemblage definitions (whose threshold values double as the true/base
parameter vector), prior bounds, proposal scales, sampler settings, and
the observed-data source.  ``ReefPosterior`` ties a config to the
forward model and likelihood so the generic samplers can drive it.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace
from math import inf, isfinite

import numpy as np

from . import observation
from .forward import (
    AssemblageSpec,
    BoundaryConditions,
    CoreRecord,
    Curve,
    GLVParams,
    SimulationConfig,
    ThresholdCurve,
    default_assemblages,
    default_boundary,
    default_glv,
    simulate,
)
from .observation import LengthMismatch, ObservedCore
from .ode import NonFiniteState, StepUnderflow
from .parameters import ParameterSpace, StepSizes
from .parameters import log_prior as space_log_prior
from .parameters import sample_prior

__all__ = ["ConfigError", "RunConfig", "ReefPosterior", "load_config", "default_config"]


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Fully resolved configuration for any subcommand."""

    sim: SimulationConfig
    boundary: BoundaryConditions
    assemblages: list[AssemblageSpec]
    glv: GLVParams
    space: ParameterSpace
    steps: StepSizes
    adaptive: bool = False
    adapt_start: int = 500
    adapt_interval: int = 50
    method: str = "single"
    samples: int = 10000
    burn_in: float = 0.15
    replicas: int = 10
    beta_max: float = 10.0
    budget: str = "total"
    seed: int = 42
    observed_path: str = ""
    structure: str = "time"
    observed_format: str = "labels"
    observed_bin_size: float | None = None
    kappa: float = 1e-6
    boundary_paths: tuple[str, str, str] = ("", "", "")

    def base_theta(self) -> np.ndarray:
        """Parameter vector holding the configured (true) values."""
        theta = np.empty(self.space.dim)
        theta[0] = self.glv.epsilon
        theta[1] = self.glv.alpha_m
        theta[2] = self.glv.alpha_s
        for i, spec in enumerate(self.assemblages):
            theta[3 + 4 * i : 7 + 4 * i] = spec.flow.points
            base = 3 + 4 * self.space.k
            theta[base + 4 * i : base + 4 * i + 4] = spec.sediment.points
        return theta

    def categories(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.assemblages) + (self.sim.sediment_label,)

    def effective_bin_size(self) -> float:
        if self.observed_bin_size is not None:
            return self.observed_bin_size
        return self.sim.layer_interval if self.structure == "time" else self.sim.depth_bin_size

    def load_observed(self) -> ObservedCore:
        if not self.observed_path:
            raise ConfigError("[inference] observed: no observed core configured")
        if not os.path.exists(self.observed_path):
            raise FileNotFoundError(f"observed core file not found: {self.observed_path}")
        cats = self.categories()
        if self.observed_format == "labels":
            obs = observation.read_labels_csv(
                self.observed_path, self.structure, self.effective_bin_size(), cats
            )
        elif self.observed_format == "intervals":
            if self.structure != "time":
                obs = observation.read_intervals_csv(
                    self.observed_path, self.effective_bin_size(), cats
                )
            else:
                raise ConfigError("[inference] format: interval files describe depth cores")
        else:
            raise ConfigError(f"[inference] format: unknown format {self.observed_format!r}")
        if obs.structure == "time":
            span = len(obs) * obs.bin_size
            want = self.sim.t_start - self.sim.t_end
            if abs(span - want) > 1e-6 * want:
                raise ConfigError(
                    f"[inference] observed: {len(obs)} bins of {obs.bin_size} yr "
                    f"cover {span} yr, simulation spans {want} yr"
                )
        return obs

    def posterior(self, obs: ObservedCore | None = None) -> "ReefPosterior":
        return ReefPosterior(
            space=self.space,
            sim=self.sim,
            boundary=self.boundary,
            assemblages=list(self.assemblages),
            base=self.base_theta(),
            obs=obs,
            kappa=self.kappa,
        )

    def to_ini(self) -> str:
        """Serialise back to INI text that reloads to the same config."""
        cp = configparser.ConfigParser()
        cp["simulation"] = {
            "t_start": repr(self.sim.t_start),
            "t_end": repr(self.sim.t_end),
            "layer_interval": repr(self.sim.layer_interval),
            "initial_depth": repr(self.sim.initial_depth),
            "depth_bin_size": repr(self.sim.depth_bin_size),
            "seed_population": repr(self.sim.seed_population),
            "tolerance": repr(self.sim.tolerance),
            "min_step_factor": repr(self.sim.min_step_factor),
            "population_cap": repr(self.sim.population_cap),
            "sediment_label": self.sim.sediment_label,
        }
        cp["boundary"] = {
            "sea_level_csv": self.boundary_paths[0],
            "flow_csv": self.boundary_paths[1],
            "sediment_csv": self.boundary_paths[2],
        }
        cp["assemblages"] = {"names": ", ".join(a.name for a in self.assemblages)}
        for spec in self.assemblages:
            cp[f"assemblage.{spec.name}"] = {
                "max_va_rate": repr(spec.max_va_rate),
                "flow_threshold": ", ".join(repr(v) for v in spec.flow.points),
                "sediment_threshold": ", ".join(repr(v) for v in spec.sediment.points),
                "depth_threshold": ", ".join(repr(v) for v in spec.depth.points),
            }
        cp["parameters"] = {
            "epsilon": repr(self.glv.epsilon),
            "alpha_m": repr(self.glv.alpha_m),
            "alpha_s": repr(self.glv.alpha_s),
        }
        cp["priors"] = {
            "epsilon_bounds": f"{self.space.epsilon_bounds[0]!r}, {self.space.epsilon_bounds[1]!r}",
            "alpha_bounds": f"{self.space.alpha_bounds[0]!r}, {self.space.alpha_bounds[1]!r}",
            "flow_bounds": f"{self.space.flow_bounds[0]!r}, {self.space.flow_bounds[1]!r}",
            "sediment_bounds": f"{self.space.sed_bounds[0]!r}, {self.space.sed_bounds[1]!r}",
        }
        sig = self.steps.sigma
        cp["proposal"] = {
            "sigma_glv": repr(float(sig[0])),
            "sigma_flow": repr(float(sig[3])) if self.space.k else "",
            "sigma_sediment": repr(float(sig[3 + 4 * self.space.k])) if self.space.k else "",
            "lam_fraction": repr(float(self.steps.lam[0] / sig[0])),
            "adaptive": str(self.adaptive).lower(),
            "adapt_start": str(self.adapt_start),
            "adapt_interval": str(self.adapt_interval),
        }
        cp["sampler"] = {
            "method": self.method,
            "samples": str(self.samples),
            "burn_in": repr(self.burn_in),
            "replicas": str(self.replicas),
            "beta_max": repr(self.beta_max),
            "budget": self.budget,
            "seed": str(self.seed),
        }
        cp["inference"] = {
            "observed": self.observed_path,
            "structure": self.structure,
            "format": self.observed_format,
            "observed_bin_size": "" if self.observed_bin_size is None else repr(self.observed_bin_size),
            "free": ", ".join(self.space.free),
            "kappa": repr(self.kappa),
        }
        out = []
        for section in cp.sections():
            out.append(f"[{section}]")
            for key, value in cp[section].items():
                out.append(f"{key} = {value}")
            out.append("")
        return "\n".join(out)


@dataclass
class ReefPosterior:
    """Target distribution over threshold/growth parameters for one core."""

    space: ParameterSpace
    sim: SimulationConfig
    boundary: BoundaryConditions
    assemblages: list[AssemblageSpec]
    base: np.ndarray
    obs: ObservedCore | None = None
    kappa: float = 1e-6

    def glv_for(self, theta: np.ndarray) -> GLVParams:
        return GLVParams(epsilon=theta[0], alpha_m=theta[1], alpha_s=theta[2])

    def specs_for(self, theta: np.ndarray) -> list[AssemblageSpec]:
        k = self.space.k
        out = []
        for i, spec in enumerate(self.assemblages):
            flow = tuple(theta[3 + 4 * i : 7 + 4 * i])
            sed = tuple(theta[3 + 4 * k + 4 * i : 3 + 4 * k + 4 * i + 4])
            out.append(
                replace(spec, flow=ThresholdCurve(flow), sediment=ThresholdCurve(sed))
            )
        return out

    def predict(self, theta: np.ndarray) -> CoreRecord:
        return simulate(self.glv_for(theta), self.specs_for(theta), self.boundary, self.sim)

    def predict_labels(self, theta: np.ndarray) -> np.ndarray:
        core = self.predict(theta)
        if self.obs is not None and self.obs.structure == "depth":
            return core.depth_label_codes(self.obs.bin_size)
        return core.time_labels

    def log_prior(self, theta: np.ndarray) -> float:
        return space_log_prior(np.asarray(theta, dtype=float), self.space)

    def log_likelihood(self, theta: np.ndarray) -> float:
        if self.obs is None:
            return 0.0
        try:
            core = self.predict(np.asarray(theta, dtype=float))
            result = observation.log_likelihood(self.obs, core, self.kappa)
        except (StepUnderflow, NonFiniteState, LengthMismatch, ValueError):
            return -inf
        return result.value if result.valid else -inf

    def misclassification(self, theta: np.ndarray) -> int:
        if self.obs is None:
            raise ValueError("no observed core bound to this posterior")
        return observation.misclassification_score(self.obs, self.predict(theta))

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        return sample_prior(self.space, self.base, rng)


def _parse_floats(text: str, n: int, where: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} comma-separated values, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


class _Section:
    """Typed accessors over one INI section with keyed error messages."""

    def __init__(self, cp: configparser.ConfigParser, name: str):
        self.name = name
        self.data = cp[name] if cp.has_section(name) else {}

    def _raw(self, key):
        value = self.data.get(key, "")
        return value.strip() if isinstance(value, str) else value

    def get(self, key: str, default: str = "") -> str:
        raw = self._raw(key)
        return raw if raw else default

    def floatv(self, key: str, default: float) -> float:
        raw = self._raw(key)
        if not raw:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: not a number: {raw!r}") from exc

    def intv(self, key: str, default: int) -> int:
        raw = self._raw(key)
        if not raw:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: not an integer: {raw!r}") from exc

    def boolv(self, key: str, default: bool) -> bool:
        raw = self._raw(key).lower()
        if not raw:
            return default
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"[{self.name}] {key}: not a boolean: {raw!r}")

    def pair(self, key: str, default: tuple[float, float]) -> tuple[float, float]:
        raw = self._raw(key)
        if not raw:
            return default
        values = _parse_floats(raw, 2, f"[{self.name}] {key}")
        return (values[0], values[1])

    def choice(self, key: str, default: str, allowed) -> str:
        raw = self.get(key, default)
        if raw not in allowed:
            raise ConfigError(f"[{self.name}] {key}: {raw!r} not one of {sorted(allowed)}")
        return raw


def _load_curve(path: str, fallback, where: str) -> Curve:
    if not path:
        return fallback()
    if not os.path.exists(path):
        raise FileNotFoundError(f"{where}: curve file not found: {path}")
    try:
        return Curve.from_csv(path)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def default_config() -> RunConfig:
    """The built-in three-assemblage setup with everything at defaults."""
    assemblages = default_assemblages()
    names = tuple(a.name for a in assemblages)
    space = ParameterSpace(assemblage_names=names, free=("epsilon", "alpha_s"))
    return RunConfig(
        sim=SimulationConfig(),
        boundary=default_boundary(),
        assemblages=assemblages,
        glv=default_glv(),
        space=space,
        steps=StepSizes.defaults(space),
    )


def load_config(path: str | None) -> RunConfig:
    """Load an INI run config; ``None`` gives the built-in defaults."""
    if path is None:
        return default_config()
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    simsec = _Section(cp, "simulation")
    try:
        sim = SimulationConfig(
            t_start=simsec.floatv("t_start", 8500.0),
            t_end=simsec.floatv("t_end", 0.0),
            layer_interval=simsec.floatv("layer_interval", 50.0),
            initial_depth=simsec.floatv("initial_depth", 30.0),
            depth_bin_size=simsec.floatv("depth_bin_size", 0.1),
            seed_population=simsec.floatv("seed_population", 1e-3),
            tolerance=simsec.floatv("tolerance", 1e-6),
            min_step_factor=simsec.floatv("min_step_factor", 1e-4),
            population_cap=simsec.floatv("population_cap", 1e9),
            sediment_label=simsec.get("sediment_label", "sediment"),
        )
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from exc

    bsec = _Section(cp, "boundary")
    paths = (
        bsec.get("sea_level_csv"),
        bsec.get("flow_csv"),
        bsec.get("sediment_csv"),
    )
    from .forward import default_flow_profile, default_sea_level, default_sediment_profile

    try:
        boundary = BoundaryConditions(
            sea_level=_load_curve(paths[0], default_sea_level, "[boundary] sea_level_csv"),
            flow=_load_curve(paths[1], default_flow_profile, "[boundary] flow_csv"),
            sediment=_load_curve(paths[2], default_sediment_profile, "[boundary] sediment_csv"),
        )
    except ValueError as exc:
        raise ConfigError(f"[boundary]: {exc}") from exc

    if cp.has_section("assemblages") or any(
        s.startswith("assemblage.") for s in cp.sections()
    ):
        names_raw = _Section(cp, "assemblages").get("names")
        if not names_raw:
            raise ConfigError("[assemblages] names: required when assemblages are configured")
        names = tuple(n.strip() for n in names_raw.split(",") if n.strip())
        assemblages = []
        for name in names:
            sect = f"assemblage.{name}"
            if not cp.has_section(sect):
                raise ConfigError(f"[{sect}]: missing section for assemblage {name!r}")
            asec = _Section(cp, sect)
            try:
                assemblages.append(
                    AssemblageSpec(
                        name=name,
                        max_va_rate=asec.floatv("max_va_rate", 10.0),
                        flow=ThresholdCurve(
                            _parse_floats(asec.get("flow_threshold"), 4, f"[{sect}] flow_threshold")
                        ),
                        sediment=ThresholdCurve(
                            _parse_floats(
                                asec.get("sediment_threshold"), 4, f"[{sect}] sediment_threshold"
                            )
                        ),
                        depth=ThresholdCurve(
                            _parse_floats(
                                asec.get("depth_threshold"), 4, f"[{sect}] depth_threshold"
                            )
                        ),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"[{sect}]: {exc}") from exc
    else:
        assemblages = default_assemblages()
        names = tuple(a.name for a in assemblages)

    psec = _Section(cp, "parameters")
    glv = GLVParams(
        epsilon=psec.floatv("epsilon", 0.08),
        alpha_m=psec.floatv("alpha_m", -0.01),
        alpha_s=psec.floatv("alpha_s", -0.03),
    )

    prsec = _Section(cp, "priors")
    isec = _Section(cp, "inference")
    free_raw = isec.get("free", "epsilon, alpha_s")
    free = tuple(f.strip() for f in free_raw.split(",") if f.strip())
    try:
        space = ParameterSpace(
            assemblage_names=names,
            free=free,
            epsilon_bounds=prsec.pair("epsilon_bounds", (0.0, 0.15)),
            alpha_bounds=prsec.pair("alpha_bounds", (-0.15, 0.0)),
            flow_bounds=prsec.pair("flow_bounds", (0.0, 0.3)),
            sed_bounds=prsec.pair("sediment_bounds", (0.0, 0.005)),
        )
    except ValueError as exc:
        raise ConfigError(f"[inference] free / [priors]: {exc}") from exc

    prop = _Section(cp, "proposal")
    steps = StepSizes.defaults(
        space,
        fraction=prop.floatv("step_fraction", 0.01),
        lam_fraction=prop.floatv("lam_fraction", 0.1),
    )
    sigma = steps.sigma.copy()
    sigma_glv = prop.floatv("sigma_glv", float("nan"))
    if isfinite(sigma_glv):
        sigma[:3] = sigma_glv
    sigma_flow = prop.floatv("sigma_flow", float("nan"))
    if isfinite(sigma_flow):
        sigma[3 : 3 + 4 * space.k] = sigma_flow
    sigma_sed = prop.floatv("sigma_sediment", float("nan"))
    if isfinite(sigma_sed):
        sigma[3 + 4 * space.k :] = sigma_sed
    lam_fraction = prop.floatv("lam_fraction", 0.1)
    try:
        steps = StepSizes(sigma=sigma, lam=lam_fraction * sigma)
    except ValueError as exc:
        raise ConfigError(f"[proposal]: {exc}") from exc

    ssec = _Section(cp, "sampler")
    config = RunConfig(
        sim=sim,
        boundary=boundary,
        assemblages=assemblages,
        glv=glv,
        space=space,
        steps=steps,
        adaptive=prop.boolv("adaptive", False),
        adapt_start=prop.intv("adapt_start", 500),
        adapt_interval=prop.intv("adapt_interval", 50),
        method=ssec.choice("method", "single", ("single", "pt")),
        samples=ssec.intv("samples", 10000),
        burn_in=ssec.floatv("burn_in", 0.15),
        replicas=ssec.intv("replicas", 10),
        beta_max=ssec.floatv("beta_max", 10.0),
        budget=ssec.choice("budget", "total", ("total", "per_replica")),
        seed=ssec.intv("seed", 42),
        observed_path=isec.get("observed"),
        structure=isec.choice("structure", "time", ("time", "depth")),
        observed_format=isec.choice("format", "labels", ("labels", "intervals")),
        observed_bin_size=(
            None if not isec.get("observed_bin_size") else isec.floatv("observed_bin_size", 0.0)
        ),
        kappa=isec.floatv("kappa", 1e-6),
        boundary_paths=paths,
    )
    if config.samples < 1:
        raise ConfigError("[sampler] samples: must be positive")
    if not 0.0 <= config.burn_in < 1.0:
        raise ConfigError("[sampler] burn_in: must be in [0, 1)")
    if config.kappa <= 0:
        raise ConfigError("[inference] kappa: must be positive")
    base = config.base_theta()
    if not config.space.admissible(base):
        raise ConfigError(
            "configured parameter values fall outside the prior bounds or ordering"
        )
    return config
