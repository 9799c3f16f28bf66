"""Declarative run configuration: model builders, hashing, validation.

A run config is a JSON document with four sections:

    model      builtin name + params, or explicit coefficient tables
    numerics   T, h, mollification level, bandwidth, truncation
    experiment command-specific knobs (seed_base, n_paths, resolutions, ...)
    output     directory and formats

The config hash is the SHA-256 of the canonical (sorted-keys) JSON dump,
so key order never changes identity.  Builtin models:

    refracted   threshold drift/volatility surplus model with claims
    brownian    b=0, sigma=1, g=0
    constant    b, sigma constants, no jumps
    lipschitz   smooth bounded control model (order-1/2 benchmark)
    antitone    sign-flipping jump kernel counterexample (violates the
                monotone-kernel condition by construction)
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .coefficients import (CoefficientTriple, IntensityMeasureSpec,
                           exponential_claims, piecewise_constant, piecewise_linear,
                           point_measure, zero_measure)
from .errors import ConfigError
from .risk import RefractedParams, build_refracted, default_claims


def config_hash(cfg: dict) -> str:
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class RunConfig:
    model: dict
    numerics: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        if "model" not in cfg:
            raise ConfigError("config needs a 'model' section")
        rc = cls(model=cfg["model"], numerics=cfg.get("numerics", {}),
                 experiment=cfg.get("experiment", {}), output=cfg.get("output", {}))
        rc.raw = cfg
        rc.hash = config_hash(cfg)
        rc.validate()
        return rc

    def validate(self) -> None:
        for key in ("T", "h"):
            v = self.numerics.get(key)
            if v is not None and (not isinstance(v, (int, float)) or v <= 0):
                raise ConfigError(f"numerics.{key} must be positive")
        n = self.numerics.get("mollify_n")
        if n is not None and (int(n) != n or n < 1):
            raise ConfigError("numerics.mollify_n must be a positive integer or null")

    @property
    def T(self) -> float:
        return float(self.numerics.get("T", 1.0))

    @property
    def h(self) -> float:
        return float(self.numerics.get("h", 1e-3))

    @property
    def x0(self) -> float:
        return float(self.model.get("x0", 0.0))

    @property
    def seed_base(self) -> int:
        return int(self.experiment.get("seed_base", 1000))


def _fn_from_table(spec: dict):
    kind = spec.get("kind")
    if kind == "piecewise_constant":
        return piecewise_constant(spec["breaks"], spec["values"]), tuple(spec["breaks"])
    if kind == "piecewise_linear":
        return piecewise_linear(spec["xs"], spec["ys"]), ()
    if kind == "constant":
        c = float(spec["value"])
        return (lambda x: np.full_like(np.asarray(x, dtype=float), c)), ()
    raise ConfigError(f"unknown coefficient table kind {kind!r}")


def _measure_from_config(spec: dict) -> IntensityMeasureSpec:
    if not spec:
        return zero_measure()
    if "exponential" in spec:
        e = spec["exponential"]
        return exponential_claims(rate=float(e["rate"]), mean=float(e["mean"]),
                                  truncation=float(e.get("truncation", 0.0)))
    if "atoms" in spec:
        return point_measure([(float(a), float(m)) for a, m in spec["atoms"]])
    raise ConfigError("measure section needs 'atoms' or 'exponential'")


def _jump_from_config(spec: dict):
    kind = (spec or {}).get("kind", "zero")
    if kind == "zero":
        return lambda x, u: np.zeros_like(np.asarray(x, dtype=float))
    if kind == "additive":
        return lambda x, u: np.asarray(u, dtype=float) + np.zeros_like(np.asarray(x, dtype=float))
    if kind == "antitone":
        # x + g(x, u) = -x for negative marks: breaks the monotone-kernel condition
        def g(x, u):
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            return np.where(u < 0, -2.0 * x, 0.0)
        return g
    raise ConfigError(f"unknown jump kind {kind!r}")


def refracted_params_from_config(params: dict) -> RefractedParams:
    claims = params.get("claims")
    if claims is None:
        measure = default_claims(rate=float(params.get("claim_rate", 1.0)),
                                 mean=float(params.get("claim_mean", 0.5)))
    else:
        measure = _measure_from_config(claims)
    return RefractedParams(
        mu1=float(params.get("mu1", 1.0)), mu2=float(params.get("mu2", 2.0)),
        p=float(params.get("p", 0.2)),
        sigma1=float(params.get("sigma1", 1.0)), sigma2=float(params.get("sigma2", 2.0)),
        q=float(params.get("q", 0.0)), claims=measure,
    )


def build_model(model: dict) -> tuple[CoefficientTriple, IntensityMeasureSpec]:
    """Coefficient triple and driving measure from a model section."""
    builtin = model.get("builtin")
    params = model.get("params", {})
    if builtin == "refracted":
        rp = refracted_params_from_config(params)
        return build_refracted(rp), rp.claims
    if builtin == "brownian":
        return _simple_triple(0.0, 1.0, "brownian"), zero_measure()
    if builtin == "constant":
        return _simple_triple(float(params.get("b", 0.0)),
                              float(params.get("sigma", 1.0)), "constant"), zero_measure()
    if builtin == "lipschitz":
        return _lipschitz_control(), zero_measure()
    if builtin == "antitone":
        return _antitone_counterexample(), point_measure([(-1.0, float(params.get("rate", 1.0)))])
    if builtin is not None:
        raise ConfigError(f"unknown builtin model {builtin!r}")

    drift, d1 = _fn_from_table(model.get("drift", {"kind": "constant", "value": 0.0}))
    diffusion, d2 = _fn_from_table(model.get("diffusion", {"kind": "constant", "value": 1.0}))
    jump = _jump_from_config(model.get("jump"))
    measure = _measure_from_config(model.get("measure", {}))
    disc = tuple(sorted(set(d1) | set(d2)))
    return CoefficientTriple(
        drift=drift, diffusion=diffusion, jump=jump, discontinuities=disc,
        bound_K=float(model.get("bound_K", 1.0)),
        sigma_lower=float(model.get("sigma_lower", 0.0)),
        label="tables",
    ), measure


def _simple_triple(b: float, sigma: float, label: str) -> CoefficientTriple:
    return CoefficientTriple(
        drift=lambda x: np.full_like(np.asarray(x, dtype=float), b),
        diffusion=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=max(b * b + sigma * sigma, 1.0), sigma_lower=abs(sigma), label=label,
    )


def _lipschitz_control() -> CoefficientTriple:
    """Bounded smooth benchmark with genuinely state-dependent diffusion."""
    return CoefficientTriple(
        drift=lambda x: -0.5 * np.tanh(np.asarray(x, dtype=float)),
        diffusion=lambda x: 0.6 + 0.2 * np.sin(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=1.0, sigma_lower=0.4, label="lipschitz-control",
    )


def _antitone_counterexample() -> CoefficientTriple:
    """Step volatility plus a kernel whose jump map x -> x + g is decreasing."""
    def g(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.where(u < 0, -2.0 * x, 0.0)

    return CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=piecewise_constant([0.0], [2.0, 1.0]),
        jump=g, discontinuities=(0.0,), bound_K=9.0, sigma_lower=1.0,
        label="antitone-kernel",
    )
