"""Spectrally negative Lévy processes with finite-activity downward jumps.

A model is described by a Gaussian coefficient ``sigma``, the drift ``gamma``
of the Lévy–Khintchine triplet (truncation at jumps of size 1) and a finite
mixture of jump components.  Every supported jump-size law has a closed-form
Laplace transform and an exact sampler, which is what the scale-function
machinery and the path simulator both rely on.

Drift convention
----------------
``gamma`` is the Lévy–Khintchine drift, so that

    kappa(theta) = sigma^2 theta^2 / 2 + gamma theta
                   + sum_i rate_i * E[exp(-theta J_i) - 1 + theta J_i 1{J_i < 1}].

Collecting the linear terms gives ``linear_drift = gamma + sum_i rate_i E[J_i; J_i < 1]``
and ``kappa(theta) = sigma^2 theta^2 / 2 + linear_drift * theta
+ sum_i rate_i (E exp(-theta J_i) - 1)``.  Between jumps the path moves as
a Brownian motion with drift ``linear_drift``; for bounded-variation models
this is the effective drift ``c``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy import special

__all__ = [
    "JumpLaw",
    "JumpComponent",
    "LevyModel",
    "PathKind",
    "VariationClass",
    "ModelConfigError",
    "PhiInverseError",
    "laplace_exponent",
    "laplace_exponent_derivative",
    "phi_inverse",
    "variation_class",
    "model_from_config",
    "load_model",
    "reference_models",
]


class ModelConfigError(ValueError):
    """Raised when a model configuration is malformed."""


class PhiInverseError(ArithmeticError):
    """Raised when the root search for ``Phi_q`` does not converge."""


class JumpLaw(str, enum.Enum):
    EXPONENTIAL = "exponential"
    ERLANG = "erlang"
    DETERMINISTIC = "deterministic"
    UNIFORM = "uniform"


class VariationClass(str, enum.Enum):
    BOUNDED = "BoundedVariation"
    UNBOUNDED = "UnboundedVariation"


class PathKind(str, enum.Enum):
    BROWNIAN_DRIFT = "BrownianDrift"
    COMPOUND_POISSON_DRIFT = "CompoundPoissonDrift"
    JUMP_DIFFUSION = "JumpDiffusion"


# integer law codes shared with the simulation kernels
LAW_CODES = {
    JumpLaw.EXPONENTIAL: 0,
    JumpLaw.ERLANG: 1,
    JumpLaw.DETERMINISTIC: 2,
    JumpLaw.UNIFORM: 3,
}

_PARAM_NAMES = {
    JumpLaw.EXPONENTIAL: ("mean",),
    JumpLaw.ERLANG: ("shape", "mean"),
    JumpLaw.DETERMINISTIC: ("size",),
    JumpLaw.UNIFORM: ("lo", "hi"),
}


@dataclass(frozen=True)
class JumpComponent:
    """One compound-Poisson stream of downward jumps.

    Parameters
    ----------
    rate : float
        Poisson intensity of this component.
    law : JumpLaw
        Law of the jump magnitude ``|Delta X| > 0``.
    params : tuple of float
        ``(mean,)`` for exponential, ``(shape, mean)`` for Erlang,
        ``(size,)`` for deterministic and ``(lo, hi)`` for uniform magnitudes.
    """

    rate: float
    law: JumpLaw
    params: tuple

    def __post_init__(self):
        law = JumpLaw(self.law)
        object.__setattr__(self, "law", law)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "rate", float(self.rate))
        names = _PARAM_NAMES[law]
        if len(params) != len(names):
            raise ModelConfigError(
                f"{law.value} law takes parameters {names}, got {len(params)} values"
            )
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ModelConfigError(f"jump rate must be positive and finite, got {self.rate}")
        if any(not (p > 0 and math.isfinite(p)) for p in params):
            raise ModelConfigError(f"{law.value} parameters must be positive, got {params}")
        if law is JumpLaw.ERLANG and params[0] != int(params[0]):
            raise ModelConfigError(f"Erlang shape must be an integer, got {params[0]}")
        if law is JumpLaw.UNIFORM and not params[0] < params[1]:
            raise ModelConfigError(f"uniform law requires 0 < lo < hi, got {params}")

    @classmethod
    def exponential(cls, rate: float, mean: float) -> "JumpComponent":
        return cls(rate, JumpLaw.EXPONENTIAL, (mean,))

    @classmethod
    def erlang(cls, rate: float, shape: int, mean: float) -> "JumpComponent":
        return cls(rate, JumpLaw.ERLANG, (shape, mean))

    @classmethod
    def deterministic(cls, rate: float, size: float) -> "JumpComponent":
        return cls(rate, JumpLaw.DETERMINISTIC, (size,))

    @classmethod
    def uniform(cls, rate: float, lo: float, hi: float) -> "JumpComponent":
        return cls(rate, JumpLaw.UNIFORM, (lo, hi))

    @property
    def is_rational(self) -> bool:
        """Whether the magnitude transform is a rational function."""
        return self.law in (JumpLaw.EXPONENTIAL, JumpLaw.ERLANG)

    @property
    def erlang_form(self) -> tuple[int, float]:
        """``(shape, phase_rate)`` for rational laws."""
        if self.law is JumpLaw.EXPONENTIAL:
            return 1, 1.0 / self.params[0]
        if self.law is JumpLaw.ERLANG:
            k = int(self.params[0])
            return k, k / self.params[1]
        raise ValueError(f"{self.law.value} law has no rational transform")

    def mean(self) -> float:
        p = self.params
        if self.law is JumpLaw.EXPONENTIAL:
            return p[0]
        if self.law is JumpLaw.ERLANG:
            return p[1]
        if self.law is JumpLaw.DETERMINISTIC:
            return p[0]
        return 0.5 * (p[0] + p[1])

    def small_jump_mean(self) -> float:
        """``E[J; J < 1]``, the part of the mean compensated in the triplet."""
        p = self.params
        if self.law in (JumpLaw.EXPONENTIAL, JumpLaw.ERLANG):
            k, beta = self.erlang_form
            # E[J; J<1] = (k/beta) P(Gamma(k+1, beta) < 1)
            return (k / beta) * float(special.gammainc(k + 1, beta))
        if self.law is JumpLaw.DETERMINISTIC:
            return p[0] if p[0] < 1.0 else 0.0
        lo, hi = p
        top = min(hi, 1.0)
        if top <= lo:
            return 0.0
        return (top * top - lo * lo) / (2.0 * (hi - lo))

    def transform(self, theta):
        """``E exp(-theta J)``; accepts real or complex arrays."""
        theta = np.asarray(theta)
        p = self.params
        if self.law in (JumpLaw.EXPONENTIAL, JumpLaw.ERLANG):
            k, beta = self.erlang_form
            return (beta / (beta + theta)) ** k
        if self.law is JumpLaw.DETERMINISTIC:
            return np.exp(-theta * p[0])
        lo, hi = p
        width = hi - lo
        small = np.abs(theta) * hi < 1e-4
        safe = np.where(small, 1.0, theta)
        direct = (np.exp(-safe * lo) - np.exp(-safe * hi)) / (safe * width)
        m1 = 0.5 * (lo + hi)
        m2 = (hi**3 - lo**3) / (3 * width)
        m3 = (hi**4 - lo**4) / (4 * width)
        series = 1.0 - theta * m1 + theta**2 * m2 / 2 - theta**3 * m3 / 6
        return np.where(small, series, direct)

    def transform_derivative(self, theta):
        """``d/dtheta E exp(-theta J) = -E[J exp(-theta J)]``."""
        theta = np.asarray(theta)
        p = self.params
        if self.law in (JumpLaw.EXPONENTIAL, JumpLaw.ERLANG):
            k, beta = self.erlang_form
            return -k * beta**k / (beta + theta) ** (k + 1)
        if self.law is JumpLaw.DETERMINISTIC:
            return -p[0] * np.exp(-theta * p[0])
        lo, hi = p
        width = hi - lo
        small = np.abs(theta) * hi < 1e-4
        safe = np.where(small, 1.0, theta)

        def prim(y):
            return -(y / safe + 1.0 / safe**2) * np.exp(-safe * y)

        direct = -(prim(hi) - prim(lo)) / width
        m1 = 0.5 * (lo + hi)
        m2 = (hi**3 - lo**3) / (3 * width)
        m3 = (hi**4 - lo**4) / (4 * width)
        series = -(m1 - theta * m2 + theta**2 * m3 / 2)
        return np.where(small, series, direct)

    def to_config(self) -> dict:
        names = _PARAM_NAMES[self.law]
        return {
            "rate": self.rate,
            "law": self.law.value,
            "params": dict(zip(names, self.params)),
        }


@dataclass(frozen=True)
class LevyModel:
    """A spectrally negative Lévy process with finite-activity jumps.

    Parameters
    ----------
    sigma : float
        Gaussian coefficient, ``sigma >= 0``.
    gamma : float
        Lévy–Khintchine drift (see the module docstring for the convention).
    jumps : tuple of JumpComponent
        Downward jump components; may be empty.

    Notes
    -----
    Instances are immutable and hashable, so they can key caches of scale
    functions.  Use :meth:`with_drift` to build a model from the drift that
    the path actually follows between jumps.
    """

    sigma: float = 0.0
    gamma: float = 0.0
    jumps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ModelConfigError(f"sigma must be a nonnegative finite number, got {self.sigma}")
        if not math.isfinite(self.gamma):
            raise ModelConfigError(f"gamma must be finite, got {self.gamma}")
        for comp in self.jumps:
            if not isinstance(comp, JumpComponent):
                raise ModelConfigError(f"jumps must be JumpComponent instances, got {comp!r}")
        if self.sigma == 0 and not self.linear_drift > 0:
            raise ModelConfigError(
                "a bounded-variation model needs a strictly positive effective drift "
                f"(got c = {self.linear_drift:.6g}); otherwise -X is a subordinator"
            )

    @classmethod
    def with_drift(cls, drift: float, sigma: float = 0.0, jumps: Iterable[JumpComponent] = ()) -> "LevyModel":
        """Build a model from its between-jump drift (``c`` when ``sigma = 0``)."""
        jumps = tuple(jumps)
        gamma = drift - sum(j.rate * j.small_jump_mean() for j in jumps)
        return cls(sigma=sigma, gamma=gamma, jumps=jumps)

    @property
    def linear_drift(self) -> float:
        return self.gamma + sum(j.rate * j.small_jump_mean() for j in self.jumps)

    @property
    def effective_drift(self) -> float:
        """The drift ``c`` of a bounded-variation model."""
        if self.sigma > 0:
            raise ValueError("effective drift is only defined for bounded-variation models")
        return self.linear_drift

    @property
    def jump_rate(self) -> float:
        """Total mass of the Lévy measure."""
        return sum(j.rate for j in self.jumps)

    @property
    def kind(self) -> PathKind:
        if not self.jumps:
            return PathKind.BROWNIAN_DRIFT
        if self.sigma == 0:
            return PathKind.COMPOUND_POISSON_DRIFT
        return PathKind.JUMP_DIFFUSION

    @property
    def is_rational(self) -> bool:
        return all(j.is_rational for j in self.jumps)

    def kappa(self, theta):
        """Laplace exponent; vectorised, accepts complex arguments."""
        theta = np.asarray(theta)
        out = 0.5 * self.sigma**2 * theta**2 + self.linear_drift * theta
        for comp in self.jumps:
            out = out + comp.rate * (comp.transform(theta) - 1.0)
        return out

    def kappa_prime(self, theta):
        theta = np.asarray(theta)
        out = self.sigma**2 * theta + self.linear_drift
        for comp in self.jumps:
            out = out + comp.rate * comp.transform_derivative(theta)
        return out

    def kappa_prime_zero(self) -> float:
        """``kappa'(0+) = E X(1)``; finite for every supported model."""
        return self.linear_drift - sum(j.rate * j.mean() for j in self.jumps)

    def to_config(self) -> dict:
        return {
            "sigma": self.sigma,
            "gamma": self.gamma,
            "jumps": [j.to_config() for j in self.jumps],
        }


def laplace_exponent(model: LevyModel, theta: float) -> float:
    """Evaluate ``kappa(theta)`` for ``theta >= 0``."""
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    return float(model.kappa(float(theta)))


def laplace_exponent_derivative(model: LevyModel, theta: float) -> float:
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    return float(model.kappa_prime(float(theta)))


def phi_inverse(model: LevyModel, q: float, *, max_iter: int = 200) -> float:
    """Right inverse ``Phi_q = sup{lam >= 0 : kappa(lam) = q}``.

    Newton's method started to the right of the root decreases monotonically
    to the largest root because ``kappa`` is convex; a bisection step is
    taken whenever an iterate leaves the current bracket.
    """
    if not q >= 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    q = float(q)
    kp0 = model.kappa_prime_zero()
    if q == 0.0 and kp0 >= 0:
        return 0.0
    tol = 1e-12 * max(1.0, q)

    def f(lam):
        return float(model.kappa(lam)) - q

    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise PhiInverseError("could not bracket the root of kappa(lam) = q")
    # the lower bracket end must lie strictly left of the largest root
    lo = 0.0
    if q == 0.0:
        # kappa < 0 just right of zero; shrink until a negative value is found
        lo = hi
        while f(lo) >= 0:
            lo *= 0.5
            if lo < 1e-300:
                raise PhiInverseError("could not isolate the positive root of kappa")
    lam = hi
    val = f(lam)
    for _ in range(max_iter):
        slope = float(model.kappa_prime(lam))
        # a small residual is not enough when kappa is flat at the root (q near 0)
        if val == 0 or (abs(val) <= tol and abs(val) <= 4 * np.finfo(float).eps * lam * slope):
            return lam
        step = lam - val / slope if slope > 0 else None
        if step is None or not (lo < step < hi):
            step = 0.5 * (lo + hi)
        lam = step
        val = f(lam)
        if val > 0:
            hi = lam
        else:
            lo = lam
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if abs(val) <= tol:
        return lam
    raise PhiInverseError(
        f"Phi_q search for q={q} stopped at {lam!r} with residual {val:.3e}; "
        "the model is ill-conditioned"
    )


def variation_class(model: LevyModel) -> VariationClass:
    """Bounded variation iff there is no Gaussian part (all jumps have finite activity)."""
    return VariationClass.BOUNDED if model.sigma == 0 else VariationClass.UNBOUNDED


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------

def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _jump_from_config(entry: Any, where: str) -> JumpComponent:
    if not isinstance(entry, dict):
        raise ModelConfigError(f"{where}: expected an object with rate/law/params")
    unknown = set(entry) - {"rate", "law", "params"}
    if unknown:
        raise ModelConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    for key in ("rate", "law", "params"):
        if key not in entry:
            raise ModelConfigError(f"{where}.{key}: missing")
    rate = _number(entry["rate"], f"{where}.rate")
    try:
        law = JumpLaw(str(entry["law"]).lower())
    except ValueError:
        choices = ", ".join(l.value for l in JumpLaw)
        raise ModelConfigError(f"{where}.law: unknown law {entry['law']!r} (choose from {choices})") from None
    names = _PARAM_NAMES[law]
    raw = entry["params"]
    if isinstance(raw, dict):
        missing = [n for n in names if n not in raw]
        extra = sorted(set(raw) - set(names))
        if missing:
            raise ModelConfigError(f"{where}.params.{missing[0]}: missing for {law.value} law")
        if extra:
            raise ModelConfigError(f"{where}.params: unexpected field(s) {extra} for {law.value} law")
        values = [_number(raw[n], f"{where}.params.{n}") for n in names]
    elif isinstance(raw, list):
        if len(raw) != len(names):
            raise ModelConfigError(f"{where}.params: {law.value} law takes {list(names)}")
        values = [_number(v, f"{where}.params[{i}]") for i, v in enumerate(raw)]
    else:
        raise ModelConfigError(f"{where}.params: expected an object or a list")
    try:
        return JumpComponent(rate, law, tuple(values))
    except ModelConfigError as exc:
        raise ModelConfigError(f"{where}: {exc}") from None


def model_from_config(config: Any) -> LevyModel:
    """Build a :class:`LevyModel` from a parsed JSON object.

    The object has fields ``sigma`` (default 0), ``gamma`` (Lévy–Khintchine
    drift) and ``jumps`` (default empty).  ``c`` may be given instead of
    ``gamma`` to specify the between-jump drift directly.
    """
    if not isinstance(config, dict):
        raise ModelConfigError("model: expected a JSON object")
    unknown = set(config) - {"sigma", "gamma", "c", "jumps", "name"}
    if unknown:
        raise ModelConfigError(f"model: unknown field(s) {sorted(unknown)}")
    if ("gamma" in config) == ("c" in config):
        raise ModelConfigError("model: give exactly one of 'gamma' or 'c'")
    sigma = _number(config.get("sigma", 0.0), "sigma")
    if sigma < 0:
        raise ModelConfigError("sigma: must be nonnegative")
    jumps_raw = config.get("jumps", [])
    if not isinstance(jumps_raw, list):
        raise ModelConfigError("jumps: expected a list")
    jumps = tuple(_jump_from_config(e, f"jumps[{i}]") for i, e in enumerate(jumps_raw))
    if "c" in config:
        return LevyModel.with_drift(_number(config["c"], "c"), sigma=sigma, jumps=jumps)
    return LevyModel(sigma=sigma, gamma=_number(config["gamma"], "gamma"), jumps=jumps)


def load_model(text_or_path: str) -> LevyModel:
    """Parse a model from JSON text or from a file path."""
    text = text_or_path
    source = "<string>"
    if not text_or_path.lstrip().startswith("{"):
        source = text_or_path
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return model_from_config(config)
    except ModelConfigError as exc:
        raise ModelConfigError(f"{source}: {exc}") from None


def reference_models() -> dict[str, LevyModel]:
    """The test models used throughout the documentation and acceptance suite."""
    return {
        "brownian": LevyModel(sigma=math.sqrt(2.0), gamma=0.0),
        "cramer_lundberg": LevyModel.with_drift(1.5, jumps=[JumpComponent.exponential(1.0, 1.0)]),
        "jump_diffusion": LevyModel(sigma=1.0, gamma=0.5, jumps=(JumpComponent.exponential(1.0, 1.0),)),
    }
