"""Experiment configuration: a flat sectioned key=value document.

The on-disk format is INI-style (``configparser``) with sections [cohort],
[distribution], [predictor], [costs], [policy], [kinematics], [output], and
[sweep].  Parsing validates every key (unknown keys and inapplicable
sections are errors), fills documented defaults, and produces both the
typed objects the simulator consumes and a canonical *echo* — a fully
defaulted section→key→value map that reports embed so no setting is ever
silently implied.

The echo (minus execution details: worker count and output directory) is
hashed into a config digest; together with the master seed it pins down a
run's outputs exactly.  For histogram distributions the digest covers the
loaded bin contents, not the CSV's path, so moving the file cannot silently
change what a digest means.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .acquisition_loop import LoopPolicy
from .alpha_distributions import (
    Beta,
    EmpiricalHistogram,
    FailureDistribution,
    PointMass,
    TruncatedNormal,
    Uniform,
)
from .cost_model import CostRates, PredictorProfile
from .errors import ConfigError
from .predictor_model import ScorePredictor
from .probe_kinematics import GuidanceNoise, LearnerPolicy, ProbePose, SubjectAnatomy

_REQUIRED = object()

_SECTIONS_BY_MODE = {
    "abstract": {"cohort", "distribution", "predictor", "costs", "policy", "output"},
    "kinematic": {"cohort", "predictor", "costs", "policy", "kinematics", "output", "sweep"},
}

_KEYS = {
    "cohort": {"mode", "subjects", "seed", "workers"},
    "distribution": {"family", "alpha", "lo", "hi", "a", "b", "mu", "sigma", "csv"},
    "predictor": {"kind", "precision", "recall", "noise_scale"},
    "costs": {"rescan", "correction"},
    "policy": {"max_rescans", "threshold"},
    "kinematics": {
        "translation_scale",
        "rotation_scale",
        "failure_cutoff",
        "start_offset_t",
        "start_offset_r",
        "guidance_noise_t",
        "guidance_noise_r",
        "gain",
        "motor_noise_t",
        "motor_noise_r",
    },
    "output": {"dir"},
    "sweep": {"tau_start", "tau_stop", "tau_steps"},
}

_FAMILY_KEYS = {
    "point_mass": {"alpha"},
    "uniform": {"lo", "hi"},
    "beta": {"a", "b"},
    "truncated_normal": {"mu", "sigma", "lo", "hi"},
    "histogram": {"csv"},
}


@dataclass(frozen=True, slots=True)
class RunManifest:
    """Reproducibility stamp embedded in every report file."""

    master_seed: int
    config_digest: str
    version: str
    timestamp: str | None

    def as_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "version": self.version,
            "timestamp": self.timestamp,
        }


def _manifest_timestamp() -> str | None:
    """Wall-clock timestamps would break byte-identical reruns, so the
    timestamp is only emitted when pinned via SOURCE_DATE_EPOCH."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def build_manifest(master_seed: int, config_digest: str) -> RunManifest:
    return RunManifest(
        master_seed=master_seed,
        config_digest=config_digest,
        version=__version__,
        timestamp=_manifest_timestamp(),
    )


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """Validated experiment settings plus their canonical echo and digest."""

    mode: str
    n_subjects: int
    master_seed: int
    workers: int
    rates: CostRates
    policy: LoopPolicy
    distribution: FailureDistribution | None
    profile: PredictorProfile | None
    score_predictor: ScorePredictor | None
    anatomy: SubjectAnatomy | None
    start_offset_t: float
    start_offset_r: float
    guidance: GuidanceNoise | None
    learner: LearnerPolicy | None
    sweep_thresholds: tuple[float, ...] | None
    out_dir: str
    echo: dict
    digest: str

    def manifest(self) -> RunManifest:
        return build_manifest(self.master_seed, self.digest)

    def manifest_dict(self) -> dict:
        return self.manifest().as_dict()


class _SectionReader:
    """Pulls typed, validated values out of one config section."""

    def __init__(self, parser: configparser.ConfigParser, section: str) -> None:
        self.section = section
        self.raw = dict(parser[section]) if parser.has_section(section) else {}
        self.seen: set[str] = set()

    def get(
        self,
        key: str,
        convert: Callable[[str], Any],
        default: Any = _REQUIRED,
        check: Callable[[Any], str | None] = lambda v: None,
    ) -> Any:
        self.seen.add(key)
        if key not in self.raw:
            if default is _REQUIRED:
                raise ConfigError(f"{self.section}.{key}: required key is missing")
            return default
        text = self.raw[key]
        try:
            value = convert(text)
        except (ValueError, TypeError):
            kind = {int: "an integer", float: "a number"}.get(convert, "valid")
            raise ConfigError(f"{self.section}.{key}: {text!r} is not {kind}") from None
        complaint = check(value)
        if complaint is not None:
            raise ConfigError(f"{self.section}.{key}: {complaint}")
        return value

    def reject_unknown(self, allowed: set[str] | None = None) -> None:
        allowed = self.seen if allowed is None else allowed
        for key in self.raw:
            if key not in allowed:
                raise ConfigError(f"{self.section}.{key}: unknown key")

    def forbid(self, key: str, why: str) -> None:
        if key in self.raw:
            raise ConfigError(f"{self.section}.{key}: {why}")


def _probability(lo_open: bool, hi_open: bool, lo=0.0, hi=1.0) -> Callable[[float], str | None]:
    def check(v: float) -> str | None:
        lo_ok = v > lo if lo_open else v >= lo
        hi_ok = v < hi if hi_open else v <= hi
        if lo_ok and hi_ok:
            return None
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        return f"must be in {left}{lo:g}, {hi:g}{right}, got {v}"

    return check


def _nonneg(v: float) -> str | None:
    return None if v >= 0.0 else f"must be >= 0, got {v}"


def _positive(v: float) -> str | None:
    return None if v > 0.0 else f"must be > 0, got {v}"


def _load_histogram_csv(path: Path) -> EmpiricalHistogram:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != ["bin_upper_edge", "mass"]:
                raise ConfigError(
                    f"distribution.csv: {path} must start with header 'bin_upper_edge,mass'"
                )
            edges: list[float] = []
            weights: list[float] = []
            for row in reader:
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 2:
                    raise ConfigError(f"distribution.csv: malformed row {row!r} in {path}")
                try:
                    edges.append(float(row[0]))
                    weights.append(float(row[1]))
                except ValueError:
                    raise ConfigError(
                        f"distribution.csv: non-numeric row {row!r} in {path}"
                    ) from None
    except OSError as exc:
        raise ConfigError(f"distribution.csv: cannot read {path}: {exc}") from None
    try:
        return EmpiricalHistogram.from_weights(edges, weights)
    except ValueError as exc:
        raise ConfigError(f"distribution.csv: {exc}") from None


def _parse_distribution(
    reader: _SectionReader, base_dir: Path
) -> tuple[FailureDistribution, dict]:
    family = reader.get(
        "family",
        str,
        check=lambda v: None
        if v in _FAMILY_KEYS
        else f"must be one of {sorted(_FAMILY_KEYS)}, got {v!r}",
    )
    allowed = {"family"} | _FAMILY_KEYS[family]
    reader.reject_unknown(allowed)

    if family == "point_mass":
        alpha = reader.get("alpha", float, check=_probability(False, True))
        return PointMass(alpha), {"family": family, "alpha": alpha}
    if family == "uniform":
        lo = reader.get("lo", float)
        hi = reader.get("hi", float)
        if not (0.0 <= lo < hi < 1.0):
            raise ConfigError(
                f"distribution.lo: support must satisfy 0 <= lo < hi < 1, got [{lo}, {hi}]"
            )
        return Uniform(lo, hi), {"family": family, "lo": lo, "hi": hi}
    if family == "beta":
        a = reader.get("a", float, check=lambda v: None if v >= 1.0 else f"must be >= 1, got {v}")
        b = reader.get("b", float, check=lambda v: None if v > 1.0 else f"must be > 1, got {v}")
        return Beta(a, b), {"family": family, "a": a, "b": b}
    if family == "truncated_normal":
        mu = reader.get("mu", float)
        sigma = reader.get("sigma", float, check=_positive)
        lo = reader.get("lo", float)
        hi = reader.get("hi", float)
        if not (0.0 <= lo < hi < 1.0):
            raise ConfigError(
                f"distribution.lo: support must satisfy 0 <= lo < hi < 1, got [{lo}, {hi}]"
            )
        dist = TruncatedNormal(mu, sigma, lo, hi)
        return dist, {"family": family, "mu": mu, "sigma": sigma, "lo": lo, "hi": hi}
    # histogram: echo the loaded bins, not the file path, so the digest pins content
    rel = reader.get("csv", str)
    hist = _load_histogram_csv(base_dir / rel)
    return hist, {"family": family, "edges": list(hist.edges), "masses": list(hist.masses)}


def parse_config(
    text: str,
    base_dir: str | Path = ".",
    seed_override: int | None = None,
    out_override: str | None = None,
) -> ExperimentConfig:
    """Validate a config document and build the typed experiment settings.

    ``seed_override`` / ``out_override`` take precedence over the document's
    values (they back the CLI's --seed/--out flags).  Every constraint
    violation raises ConfigError naming the offending section.key.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None

    cohort = _SectionReader(parser, "cohort")
    mode = cohort.get(
        "mode",
        str,
        check=lambda v: None
        if v in _SECTIONS_BY_MODE
        else f"must be 'abstract' or 'kinematic', got {v!r}",
    )
    allowed_sections = _SECTIONS_BY_MODE[mode]
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{section}: unknown section")
        if section not in allowed_sections:
            raise ConfigError(f"{section}: section not applicable in {mode} mode")
    for section in ("cohort", "predictor", "costs", "policy"):
        if not parser.has_section(section):
            raise ConfigError(f"{section}: required section is missing")
    if mode == "abstract" and not parser.has_section("distribution"):
        raise ConfigError("distribution: required section is missing in abstract mode")
    if mode == "kinematic" and not parser.has_section("kinematics"):
        raise ConfigError("kinematics: required section is missing in kinematic mode")

    n_subjects = cohort.get("subjects", int, check=lambda v: _nonneg(v))
    seed = cohort.get(
        "seed",
        int,
        default=0,
        check=lambda v: None if 0 <= v < 2**64 else f"must be in [0, 2^64), got {v}",
    )
    workers = cohort.get(
        "workers",
        int,
        default=os.cpu_count() or 1,
        check=lambda v: None if v >= 1 else f"must be >= 1, got {v}",
    )
    cohort.reject_unknown()
    if seed_override is not None:
        if not 0 <= seed_override < 2**64:
            raise ConfigError(f"cohort.seed: override must be in [0, 2^64), got {seed_override}")
        seed = seed_override

    costs = _SectionReader(parser, "costs")
    rescan_cost = costs.get("rescan", float, check=_nonneg)
    correction_cost = costs.get("correction", float, check=_positive)
    costs.reject_unknown()
    rates = CostRates(rescan_cost=rescan_cost, correction_cost=correction_cost)

    policy_reader = _SectionReader(parser, "policy")
    max_rescans = policy_reader.get("max_rescans", int, default=50, check=lambda v: _nonneg(v))
    if mode == "abstract":
        policy_reader.forbid(
            "threshold", "not applicable in abstract mode (the predictor flags directly)"
        )
        threshold = None
    else:
        threshold = policy_reader.get("threshold", float)
    policy_reader.reject_unknown()
    policy = LoopPolicy(max_rescans=max_rescans, quality_threshold=threshold)

    predictor = _SectionReader(parser, "predictor")
    kind = predictor.get(
        "kind",
        str,
        check=lambda v: None
        if v in ("confusion", "score")
        else f"must be 'confusion' or 'score', got {v!r}",
    )
    distribution = None
    profile = None
    score_predictor = None
    anatomy = None
    start_offset_t = start_offset_r = 0.0
    guidance = None
    learner = None
    echo: dict[str, dict] = {"cohort": {"mode": mode, "subjects": n_subjects, "seed": seed}}

    if mode == "abstract":
        if kind != "confusion":
            raise ConfigError("predictor.kind: abstract mode requires 'confusion'")
        precision = predictor.get("precision", float, check=_probability(True, False))
        recall = predictor.get("recall", float, check=_probability(False, False))
        predictor.reject_unknown({"kind", "precision", "recall"})
        profile = PredictorProfile(precision=precision, recall=recall)
        dist_reader = _SectionReader(parser, "distribution")
        distribution, dist_echo = _parse_distribution(dist_reader, Path(base_dir))
        echo["distribution"] = dist_echo
        echo["predictor"] = {"kind": kind, "precision": precision, "recall": recall}
        echo["policy"] = {"max_rescans": max_rescans}
    else:
        if kind != "score":
            raise ConfigError("predictor.kind: kinematic mode requires 'score'")
        noise_scale = predictor.get("noise_scale", float, check=_nonneg)
        predictor.reject_unknown({"kind", "noise_scale"})
        score_predictor = ScorePredictor(noise_scale=noise_scale, threshold=threshold)
        kin = _SectionReader(parser, "kinematics")
        translation_scale = kin.get("translation_scale", float, check=_positive)
        rotation_scale = kin.get("rotation_scale", float, check=_positive)
        failure_cutoff = kin.get("failure_cutoff", float, check=_probability(True, True))
        start_offset_t = kin.get("start_offset_t", float, check=_nonneg)
        start_offset_r = kin.get("start_offset_r", float, check=_nonneg)
        guidance_noise_t = kin.get("guidance_noise_t", float, default=0.0, check=_nonneg)
        guidance_noise_r = kin.get("guidance_noise_r", float, default=0.0, check=_nonneg)
        gain = kin.get("gain", float, default=1.0, check=_probability(True, False))
        motor_noise_t = kin.get("motor_noise_t", float, default=0.0, check=_nonneg)
        motor_noise_r = kin.get("motor_noise_r", float, default=0.0, check=_nonneg)
        kin.reject_unknown()
        anatomy = SubjectAnatomy(
            target_pose=ProbePose.identity(),
            translation_scale=translation_scale,
            rotation_scale=rotation_scale,
            failure_cutoff=failure_cutoff,
        )
        guidance = GuidanceNoise(
            guidance_noise_t=guidance_noise_t, guidance_noise_r=guidance_noise_r
        )
        learner = LearnerPolicy(
            gain=gain, motor_noise_t=motor_noise_t, motor_noise_r=motor_noise_r
        )
        echo["predictor"] = {"kind": kind, "noise_scale": noise_scale}
        echo["policy"] = {"max_rescans": max_rescans, "threshold": threshold}
        echo["kinematics"] = {
            "translation_scale": translation_scale,
            "rotation_scale": rotation_scale,
            "failure_cutoff": failure_cutoff,
            "start_offset_t": start_offset_t,
            "start_offset_r": start_offset_r,
            "guidance_noise_t": guidance_noise_t,
            "guidance_noise_r": guidance_noise_r,
            "gain": gain,
            "motor_noise_t": motor_noise_t,
            "motor_noise_r": motor_noise_r,
        }

    echo["costs"] = {"rescan": rescan_cost, "correction": correction_cost}

    sweep_thresholds = None
    if parser.has_section("sweep"):
        sweep = _SectionReader(parser, "sweep")
        tau_start = sweep.get("tau_start", float)
        tau_stop = sweep.get("tau_stop", float)
        tau_steps = sweep.get(
            "tau_steps", int, check=lambda v: None if v >= 1 else f"must be >= 1, got {v}"
        )
        sweep.reject_unknown()
        if tau_start > tau_stop:
            raise ConfigError(
                f"sweep.tau_start: must be <= tau_stop, got {tau_start} > {tau_stop}"
            )
        sweep_thresholds = tuple(float(t) for t in np.linspace(tau_start, tau_stop, tau_steps))
        echo["sweep"] = {
            "tau_start": tau_start,
            "tau_stop": tau_stop,
            "tau_steps": tau_steps,
        }

    out_reader = _SectionReader(parser, "output")
    out_dir = out_reader.get("dir", str, default="runs")
    out_reader.reject_unknown()
    if out_override is not None:
        out_dir = out_override

    digest = hashlib.sha256(
        json.dumps(echo, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()

    return ExperimentConfig(
        mode=mode,
        n_subjects=n_subjects,
        master_seed=seed,
        workers=workers,
        rates=rates,
        policy=policy,
        distribution=distribution,
        profile=profile,
        score_predictor=score_predictor,
        anatomy=anatomy,
        start_offset_t=start_offset_t,
        start_offset_r=start_offset_r,
        guidance=guidance,
        learner=learner,
        sweep_thresholds=sweep_thresholds,
        out_dir=out_dir,
        echo=echo,
        digest=digest,
    )
