"""JSON run configurations: strict pydantic schema plus builders for runner inputs."""

import json
from dataclasses import fields
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from qoc.asymptotics import DesignMap, Scenario
from qoc.designs.protocols import (
    BarProtocol,
    ExternalDataProtocol,
    ExternalDataScenario,
    SingleArmProtocol,
    TwoArmProtocol,
)
from qoc.mc.mcmc import McmcConfig
from qoc.registry import DESIGNS
from qoc.streams import MAX_SEED

SCHEMA_VERSION = 1

PROTOCOLS = {
    "single_arm": SingleArmProtocol,
    "two_arm": TwoArmProtocol,
    "multistage": TwoArmProtocol,
    "external_data": ExternalDataProtocol,
    "bar": BarProtocol,
}


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioBlock(Strict):
    id: str
    rate: float | None = None
    rates: tuple[float, float] | None = None
    outcome_params: list[float] | None = None
    profiles: list[list[float]] | None = None
    profile_probs: list[float] | None = None
    external_profile_probs: list[float] | None = None
    protocol: dict = Field(default_factory=dict)     # per-scenario protocol overrides


class SequenceGrid(Strict):
    """Two-arm local alternatives ``(base, base + a / sqrt(n))`` over total sizes ``n``."""

    start: int
    stop: int
    step: int = 10
    base: float = 0.4
    a: float = 2.1

    @model_validator(mode="after")
    def _check(self):
        if self.start < 2 or self.stop < self.start or self.step < 1:
            raise ValueError("sequence grid needs 2 <= start <= stop and a positive step")
        return self


class Replicates(Strict):
    q: int = Field(10000, ge=1)
    mc: int = Field(500, ge=1)


class McmcBlock(Strict):
    iterations: int = 4000
    burn_in: int = 1000
    thin: int = 3
    target_accept: float = 0.234
    adapt_every: int = 100


class GenzBlock(Strict):
    method: Literal["auto", "genz"] = "auto"
    tol: float = Field(5e-4, gt=0)


class SweepBlock(Strict):
    axis: Literal["n", "scenario", "budget"]
    values: list[float] = Field(min_length=1)
    field: str | None = None            # scenario coordinate, e.g. "rates.1" or "rate"
    sequence: SequenceGrid | None = None
    repeats: int = Field(20, ge=2)      # budget sweeps: seeds per budget for the RMSE


class AuditBlock(Strict):
    R_q: int = Field(160000, ge=1)
    R_mc: int | None = Field(100, ge=1)
    mc_budget: float | Literal["match"] | None = None
    oc: str | None = None
    tau_prior_scale: float = Field(0.05, gt=0)


class RunConfig(Strict):
    schema_: Literal[1] = Field(alias="schema")
    design: str
    label: str | None = None
    protocol: dict = Field(default_factory=dict)
    scenarios: list[ScenarioBlock] = Field(default_factory=list)
    sequence: SequenceGrid | None = None
    engine: Literal["q", "mc", "both"] = "both"
    replicates: Replicates = Field(default_factory=Replicates)
    seed: int = Field(1, ge=0, le=MAX_SEED)
    out: str = "results"
    mcmc: McmcBlock | None = None
    genz: GenzBlock | None = None
    sweep: SweepBlock | None = None
    audit: AuditBlock | None = None

    @field_validator("design")
    @classmethod
    def _known_design(cls, v):
        if v not in DESIGNS:
            raise ValueError(f"unknown design id {v!r}; known: {sorted(DESIGNS)}")
        return v

    @model_validator(mode="after")
    def _grid(self):
        if not self.scenarios and self.sequence is None:
            raise ValueError("empty scenario grid")
        if self.sequence is not None and self.design not in ("two_arm", "multistage"):
            raise ValueError("sequence grids apply to two-arm designs only")
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario ids must be unique")
        return self


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return RunConfig.model_validate(data)


def _protocol_kwargs(cls, raw):
    known = {f.name for f in fields(cls)}
    bad = sorted(set(raw) - known)
    if bad:
        raise ValueError(f"unknown protocol field(s) {bad}")
    out = {}
    for k, v in raw.items():
        out[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
    return out


def build_protocol(design, raw, overrides=None):
    cls = PROTOCOLS[design]
    kw = _protocol_kwargs(cls, dict(raw) | dict(overrides or {}))
    proto = cls(**kw)
    if design == "multistage" and proto.stage_sizes is None:
        raise ValueError("multistage protocols need stage_sizes and futility thresholds")
    return proto


def _logistic_scenario(block, design_map, dim):
    if block.outcome_params is None or block.profiles is None or block.profile_probs is None:
        raise ValueError(f"scenario {block.id!r} needs outcome_params, profiles and profile_probs")
    omega = np.asarray(block.outcome_params, dtype=float)
    if omega.size != dim:
        raise ValueError(f"scenario {block.id!r}: expected {dim} outcome parameters, got {omega.size}")
    return Scenario(omega, np.asarray(block.profiles, dtype=float), np.asarray(block.profile_probs, dtype=float), design_map)


def build_scenario(design, block, protocol):
    if design == "single_arm":
        if block.rate is None:
            raise ValueError(f"scenario {block.id!r} needs a rate")
        return float(block.rate)
    if design in ("two_arm", "multistage"):
        if block.rates is None:
            raise ValueError(f"scenario {block.id!r} needs rates")
        return tuple(float(r) for r in block.rates)
    if design == "external_data":
        n_cov = len(block.profiles[0]) if block.profiles else 0
        dm = DesignMap("main", 2, tuple(range(n_cov)))
        trial = _logistic_scenario(block, dm, dm.dim)
        ext = None if block.external_profile_probs is None else np.asarray(block.external_profile_probs, dtype=float)
        return ExternalDataScenario(trial, ext)
    if design == "bar":
        return _logistic_scenario(block, protocol.design, protocol.design.dim)
    raise ValueError(f"unknown design id {design!r}")


def sequence_cases(design, raw_protocol, seq):
    """Local-alternative grid: balanced arms of n/2, rates (base, base + a/sqrt(n))."""
    cases = {}
    for n in range(seq.start, seq.stop + 1, seq.step):
        half = n // 2
        over = {"n0": half, "n1": n - half}
        proto = build_protocol(design, raw_protocol, over)
        cases[f"n{n}"] = (proto, (seq.base, seq.base + seq.a / np.sqrt(n)))
    return cases


def build_cases(cfg):
    """Ordered ``{scenario_id: (protocol, scenario)}`` for a validated config."""
    cases = {}
    for block in cfg.scenarios:
        proto = build_protocol(cfg.design, cfg.protocol, block.protocol)
        cases[block.id] = (proto, build_scenario(cfg.design, block, proto))
    if cfg.sequence is not None:
        cases.update(sequence_cases(cfg.design, cfg.protocol, cfg.sequence))
    return cases


def build_mcmc(cfg):
    if cfg.design in ("external_data", "bar"):
        return McmcConfig(**cfg.mcmc.model_dump()) if cfg.mcmc else McmcConfig()
    return None


def q_options(cfg):
    return cfg.genz.model_dump() if cfg.genz else None
