"""Configuration and result records shared by every module.

Records are frozen dataclasses. They do not raise on construction; call
:func:`validate` (or :meth:`Config.validated`) to get the list of violated
invariants. Everything downstream that consumes a configuration validates it
first.

Failure probabilities are carried in log space. With ``d = 8`` and
``N = 1e13`` the postselection factor ``(N+1)^(d^2-1)`` is about ``1e819``,
so the per-component epsilons sit far below the smallest double.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import tomli_w

DEFAULT_CLOCK_HZ = 1.25e9
DEFAULT_DARK_RATE_HZ = 0.1


def dark_count_probability(dark_rate_hz: float, clock_hz: float = DEFAULT_CLOCK_HZ) -> float:
    """Per-window dark-count probability for a detector with the given dark rate."""
    return dark_rate_hz / clock_hz


@dataclass(frozen=True)
class SourceBounds:
    """Lower bounds on the vacuum projections of the four source states."""

    a0: float = 1.0
    a_o0: float = 1.0
    b0: float = 1.0
    b_o0: float = 1.0

    def violations(self) -> list[str]:
        out = []
        for name in ("a0", "a_o0", "b0", "b_o0"):
            v = getattr(self, name)
            if not v >= 0.5:
                out.append(f"{name} < 0.5")
            elif not v <= 1.0:
                out.append(f"{name} > 1")
        return out


@dataclass(frozen=True)
class EpsilonBudget:
    """Natural logs of the component failure probabilities."""

    log_eps_cor: float
    log_eps_PA: float
    log_eps_bar: float
    log_eps: float
    log_eps_coh: float

    @property
    def log10_eps_coh(self) -> float:
        return self.log_eps_coh / math.log(10.0)


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol settings.

    ``mu_A``/``mu_B`` are the strong-source intensities. When the vacuum
    states are imperfect (``extinction_db`` set, or explicit
    :class:`SourceBounds`), the phase-error estimate uses the larger
    equivalent intensities returned by :mod:`scsqkd.mapping`.

    Leaving ``eps_cor``, ``eps_PA``, ``eps_bar`` and ``eps`` unset splits
    ``eps_coh / (N+1)^(d^2-1)`` equally four ways
    (``eps_cor = eps_PA = eps_bar = 3*eps``).
    """

    mu_A: float = 0.01
    mu_B: float = 0.01
    p_x: float = 0.2
    N: float = 1e13
    f_ec: float = 1.1
    d: int = 8
    eps_coh: float = 1e-10
    eps_cor: float | None = None
    eps_PA: float | None = None
    eps_bar: float | None = None
    eps: float | None = None
    intensity_fluct: float = 0.0065
    extinction_db: float | None = None

    @property
    def p_o(self) -> float:
        return 1.0 - self.p_x

    def with_mu(self, mu: float) -> ProtocolParams:
        return replace(self, mu_A=mu, mu_B=mu)

    def budget(self) -> EpsilonBudget:
        log_post = (self.d * self.d - 1) * math.log1p(self.N)
        explicit = (self.eps_cor, self.eps_PA, self.eps_bar, self.eps)
        if all(e is None for e in explicit):
            log_total = math.log(self.eps_coh) - log_post
            share = log_total - math.log(4.0)
            return EpsilonBudget(share, share, share, share - math.log(3.0), math.log(self.eps_coh))
        if any(e is None for e in explicit):
            raise ConfigError("set all of eps_cor, eps_PA, eps_bar, eps or none of them")
        logs = [math.log(self.eps_cor), math.log(self.eps_PA), math.log(self.eps_bar), math.log(3.0 * self.eps)]
        top = max(logs)
        log_sum = top + math.log(sum(math.exp(v - top) for v in logs))
        return EpsilonBudget(logs[0], logs[1], logs[2], math.log(self.eps), log_sum + log_post)

    def violations(self) -> list[str]:
        out = []
        if not 0.0 <= self.p_x <= 1.0:
            out.append("p_x out of [0,1]")
        for name in ("mu_A", "mu_B"):
            if not getattr(self, name) > 0.0:
                out.append(f"{name} <= 0")
        if not self.N >= 1:
            out.append("N < 1")
        if not self.f_ec >= 1.0:
            out.append("f_ec < 1")
        if not (isinstance(self.d, int) and self.d >= 1):
            out.append("d must be a positive integer")
        for name in ("eps_coh", "eps_cor", "eps_PA", "eps_bar", "eps"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v < 1.0:
                out.append(f"{name} out of (0,1)")
        explicit = [getattr(self, n) is None for n in ("eps_cor", "eps_PA", "eps_bar", "eps")]
        if any(explicit) and not all(explicit):
            out.append("eps_cor/eps_PA/eps_bar/eps must be set together")
        if not self.intensity_fluct >= 0.0:
            out.append("intensity_fluct < 0")
        if self.extinction_db is not None and not self.extinction_db > 0.0:
            out.append("extinction_db <= 0")
        return out


@dataclass(frozen=True)
class ChannelParams:
    """Fiber link and detector description. ``distance_km`` is the Alice-Bob length."""

    distance_km: float = 0.0
    atten_db_per_km: float = 0.18
    extra_loss_db: float = 0.0
    det_efficiency: float = 0.69
    P_dc: float = DEFAULT_DARK_RATE_HZ / DEFAULT_CLOCK_HZ
    e_d: float = 0.0
    clock_hz: float = DEFAULT_CLOCK_HZ
    duty_cycle: float = 0.5

    @property
    def total_loss_db(self) -> float:
        return self.atten_db_per_km * self.distance_km + self.extra_loss_db

    def violations(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0.0):
                out.append(f"{f.name} must be finite and >= 0")
        for name in ("det_efficiency", "P_dc", "e_d", "duty_cycle"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and v > 1.0:
                out.append(f"{name} out of [0,1]")
        return out


@dataclass(frozen=True)
class ObservedStatistics:
    """Effective-window counts and raw-key error rate."""

    n_Z: float
    n_O: float
    n_B: float
    M_S: float
    E_t: float

    def violations(self) -> list[str]:
        out = []
        for name in ("n_Z", "n_O", "n_B", "M_S"):
            if not getattr(self, name) >= 0.0:
                out.append(f"{name} < 0")
        if not 0.0 <= self.E_t <= 1.0:
            out.append("E_t out of [0,1]")
        if not self.M_S >= self.n_Z:
            out.append("M_S < n_Z")
        return out


@dataclass(frozen=True)
class KeyRateReport:
    """Key rates (bits per window) and every intermediate of the finite-key bound.

    ``cost_breakdown`` maps the name of each subtracted term to its value in
    bits; ``R_raw`` is the unclamped collective-attack rate so that
    ``R_raw * N + sum(costs) == n_Z * (1 - H(e_ph))``.
    """

    R: float
    R_coh: float
    skr_bps: float
    e_ph: float
    N_ph_bar: float
    N_ph_expected: float
    n_O_exp_U: float
    n_B_exp_U: float
    R_raw: float
    stats: ObservedStatistics
    mu_eq_A: float
    mu_eq_B: float
    log10_eps_coh: float
    cost_breakdown: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(params: ProtocolParams, channel: ChannelParams, bounds: SourceBounds | None = None) -> ValidationReport:
    """Collect every violated invariant; an empty list means the configuration is usable."""
    out = params.violations() + channel.violations()
    if bounds is not None:
        out += bounds.violations()
    return ValidationReport(out)


# --- serialisation -------------------------------------------------------------------

RECORD_TYPES = {
    "ProtocolParams": ProtocolParams,
    "ChannelParams": ChannelParams,
    "SourceBounds": SourceBounds,
    "ObservedStatistics": ObservedStatistics,
}


def to_dict(record) -> dict[str, Any]:
    """Plain-dict form of a record, ``None`` fields dropped."""
    return {k: v for k, v in asdict(record).items() if v is not None}


def from_dict(cls, data: dict[str, Any]):
    if cls is KeyRateReport:
        data = dict(data)
        data["stats"] = ObservedStatistics(**data["stats"])
        return KeyRateReport(**data)
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} field(s): {', '.join(sorted(unknown))}")
    values = dict(data)
    if cls is ProtocolParams and "d" in values:
        d = values["d"]
        if isinstance(d, float) and d.is_integer():
            values["d"] = int(d)
    return cls(**values)


@dataclass(frozen=True)
class PhaseLockConfig:
    """Settings for the phase-compensation simulator (see :mod:`scsqkd.phaselock`)."""

    C0: float = 44950.0
    Cd: float = 100.0
    V_pi: float = 4.0
    v_min: float = -15.54
    v_max: float = 15.96
    sigma_rad_per_sqrt_s: float = 0.5
    e_floor: float = 0.0359
    sample_interval_s: float = 0.1


@dataclass(frozen=True)
class OptimizerConfig:
    n_mu: int = 32
    n_px: int = 32
    mu_min: float = 1e-5
    mu_max: float = 0.5
    px_min: float = 0.0
    px_max: float = 1.0
    mu_spacing: str = "log"
    refine: bool = True
    xrtol: float = 1e-6


@dataclass(frozen=True)
class Config:
    """A complete experiment recipe as read from a TOML file.

    Sections: ``[protocol]``, ``[channel]``, ``[source_bounds]`` (optional),
    ``[phaselock]``, ``[optimizer]``. In ``[channel]``, ``dark_rate_hz`` may
    be given instead of ``P_dc``.
    """

    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    source_bounds: SourceBounds | None = None
    phaselock: PhaseLockConfig = field(default_factory=PhaseLockConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def validated(self) -> Config:
        report = validate(self.protocol, self.channel, self.source_bounds)
        if not report.ok:
            raise ConfigError("invalid configuration: " + "; ".join(report.violations), report.violations)
        return self


_SECTIONS = {
    "protocol": ProtocolParams,
    "channel": ChannelParams,
    "source_bounds": SourceBounds,
    "phaselock": PhaseLockConfig,
    "optimizer": OptimizerConfig,
}


def config_from_dict(data: dict[str, Any]) -> Config:
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name not in data:
            continue
        section = data[name]
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        section = dict(section)
        if cls is ChannelParams and "dark_rate_hz" in section:
            if "P_dc" in section:
                raise ConfigError("give either P_dc or dark_rate_hz, not both")
            rate = section.pop("dark_rate_hz")
            section["P_dc"] = dark_count_probability(rate, section.get("clock_hz", DEFAULT_CLOCK_HZ))
        try:
            kwargs[name] = from_dict(cls, section)
        except TypeError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    return Config(**kwargs)


def config_to_dict(config: Config) -> dict[str, Any]:
    out: dict[str, Any] = {"seed": config.seed}
    for name in _SECTIONS:
        record = getattr(config, name)
        if record is not None:
            out[name] = to_dict(record)
    return out


def loads_config(text: str) -> Config:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(data)


def dumps_config(config: Config) -> str:
    return tomli_w.dumps(config_to_dict(config))


def load_config(path: str | Path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


def preset_path(name: str) -> Path:
    """Path of a shipped preset, e.g. ``preset_path("200km")``."""
    path = Path(__file__).parent / "presets" / f"{name}.toml"
    if not path.exists():
        raise ConfigError(f"no preset named {name!r}")
    return path
