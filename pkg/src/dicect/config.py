"""Typed INI experiment configuration.

Every key lives in a fixed section; unknown sections or keys are errors.
List-valued keys (``views``, ``pattern``, ``method``) take comma-separated
values and define the experiment grid.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field, fields

from dicect.baselines import WINDOWS, FistaConfig
from dicect.diffusion import make_schedule
from dicect.errors import ConfigError, DiceError
from dicect.geometry import SamplingPattern
from dicect.sampler import SamplerConfig

METHODS = ("fbp", "pnp_fista", "dice")
PHANTOMS = ("shepp_logan", "ellipses", "mixed")
DENOISERS = ("tv", "gaussian")
SWEEP_AXES = ("rho", "tau1", "K", "P", "T_steps")

_SECTIONS = {
    "data": ("phantom", "input_dir", "n_images", "image_side", "noise_sigma"),
    "sampling": ("views", "pattern", "pattern_seed"),
    "run": ("method", "seed", "out", "workers", "record_seconds", "data_range"),
    "dice": ("rho", "tau1", "K", "P", "T_steps", "schedule", "schedule_T", "beta1", "betaT",
             "denoiser", "lambda_tv", "tv_iters", "prior_var", "prior_mean", "gauss_length",
             "fixed_point_tol", "warm_start_ce", "cg_warm_start"),
    "fista": ("fista_lambda", "fista_iters", "fista_step", "fista_tv_iters"),
    "fbp": ("fbp_window",),
}
SECTION_OF = {key: sec for sec, keys in _SECTIONS.items() for key in keys}


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    phantom: str = "shepp_logan"
    input_dir: str | None = None
    n_images: int = 1
    image_side: int = 64
    noise_sigma: float = 0.0
    # sampling grid
    views: tuple = (15,)
    pattern: tuple = ("uniform",)
    pattern_seed: int | None = None  # None: derived from seed
    # run
    method: tuple = ("dice",)
    seed: int = 0
    out: str = "results"
    workers: int = 1
    record_seconds: bool = True
    data_range: float = 1.0
    # dice
    rho: float = 0.9
    tau1: float = 0.5
    K: int = 5
    P: int | None = 5  # None: exact prox
    T_steps: int = 100
    schedule: str = "linear"
    schedule_T: int = 1000
    beta1: float = 1e-4
    betaT: float = 0.02
    denoiser: str = "tv"
    lambda_tv: float = 0.5
    tv_iters: int = 30
    prior_var: float | None = 1.0  # None: literal x_t / sqrt(abar) rescaling
    prior_mean: float = 0.0
    gauss_length: float = 1.5
    fixed_point_tol: float | None = None
    warm_start_ce: bool = False
    cg_warm_start: str = "input"
    # pnp-fista
    fista_lambda: float = 0.1
    fista_iters: int = 300
    fista_step: str = "auto"
    fista_tv_iters: int = 30
    # fbp
    fbp_window: str = "ramlak"

    def sampler_config(self):
        return SamplerConfig(T_steps=self.T_steps, rho=self.rho, K=self.K, P=self.P,
                             tau1=self.tau1, seed=self.seed,
                             fixed_point_tol=self.fixed_point_tol,
                             warm_start_ce=self.warm_start_ce, cg_warm_start=self.cg_warm_start)

    def fista_config(self):
        step = self.fista_step if self.fista_step == "auto" else float(self.fista_step)
        return FistaConfig(lam=self.fista_lambda, iters=self.fista_iters, step=step)

    def noise_schedule(self):
        return make_schedule(self.schedule_T, self.schedule, self.beta1, self.betaT)

    def grid(self):
        """``(pattern, views)`` pairs in file order."""
        return [(p, v) for p in self.pattern for v in self.views]


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_TUPLE_ITEM = {"views": int, "pattern": str, "method": str}


def _parse_scalar(name, text):
    ftype = _FIELDS[name].type
    text = text.strip()
    optional = "None" in ftype
    if optional and text.lower() in ("", "none", "exact" if name == "P" else "none"):
        return None
    try:
        if name in _TUPLE_ITEM:
            items = tuple(_TUPLE_ITEM[name](s.strip()) for s in text.split(",") if s.strip())
            if not items:
                raise ValueError("empty list")
            return items
        if ftype.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if ftype.startswith("int"):
            return int(text)
        if ftype.startswith("float"):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{SECTION_OF[name]}] {name}: {exc}") from None


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply(base, values, origin):
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{origin}: unknown key(s) {', '.join(unknown)}")
    return dataclasses.replace(base, **values)


def parse_config(text, origin="<config>", base=None):
    """Parse INI text on top of ``base`` (defaults if omitted) and validate."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
            values[key] = _parse_scalar(key, raw)
    cfg = _apply(base or ExperimentConfig(), values, origin)
    validate(cfg, origin)
    return cfg


def load_config(path=None):
    if path is None:
        cfg = ExperimentConfig()
        validate(cfg)
        return cfg
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from None
    return parse_config(text, origin=str(path))


def apply_overrides(cfg, overrides, origin="--override"):
    """Apply ``key=value`` or ``section.key=value`` strings, then validate."""
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"{origin}: expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if SECTION_OF.get(key) != section:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
        if key not in _FIELDS:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        values[key] = _parse_scalar(key, raw)
    cfg = _apply(cfg, values, origin)
    validate(cfg, origin)
    return cfg


def to_ini(cfg):
    """Full config echo; ``parse_config(to_ini(cfg)) == cfg``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in _SECTIONS.items():
        parser[section] = {k: _format_value(getattr(cfg, k)) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def validate(cfg, origin="<config>"):
    """Check every downstream precondition so no run starts with a bad config."""

    def fail(msg):
        raise ConfigError(f"{origin}: {msg}")

    if cfg.phantom not in PHANTOMS:
        fail(f"phantom must be one of {PHANTOMS}, got {cfg.phantom!r}")
    if cfg.input_dir is not None and not os.path.isdir(cfg.input_dir):
        fail(f"input_dir {cfg.input_dir!r} is not a directory")
    if cfg.n_images < 1:
        fail("n_images must be >= 1")
    if cfg.image_side < 11:
        fail("image_side must be >= 11 (SSIM window)")
    if cfg.noise_sigma < 0:
        fail("noise_sigma must be >= 0")
    if cfg.data_range <= 0:
        fail("data_range must be positive")
    if cfg.workers < 1:
        fail("workers must be >= 1")
    for m in cfg.method:
        if m not in METHODS:
            fail(f"method must be among {METHODS}, got {m!r}")
    if cfg.denoiser not in DENOISERS:
        fail(f"denoiser must be one of {DENOISERS}, got {cfg.denoiser!r}")
    if cfg.fbp_window not in WINDOWS:
        fail(f"fbp_window must be one of {WINDOWS}, got {cfg.fbp_window!r}")
    if cfg.lambda_tv <= 0 or cfg.tv_iters < 1 or cfg.fista_tv_iters < 1:
        fail("lambda_tv must be positive and TV iteration counts >= 1")
    if cfg.prior_var is not None and cfg.prior_var <= 0:
        fail("prior_var must be positive")
    if cfg.gauss_length <= 0:
        fail("gauss_length must be positive")
    if cfg.denoiser == "gaussian" and cfg.image_side > 48:
        fail("the gaussian denoiser builds a dense covariance; use image_side <= 48")
    try:
        for p, v in cfg.grid():
            SamplingPattern(p, v, 0 if p == "nonuniform" else None)
        sched = cfg.noise_schedule()
        if cfg.T_steps > sched.T:
            fail(f"T_steps {cfg.T_steps} exceeds schedule_T {sched.T}")
        cfg.sampler_config()
        cfg.fista_config()
    except ConfigError:
        raise
    except (DiceError, ValueError) as exc:
        fail(str(exc))
    return cfg
