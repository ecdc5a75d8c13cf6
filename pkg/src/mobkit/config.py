"""Pipeline configuration: plain-text key = value files plus overrides.

A configuration file holds one ``key = value`` pair per line (``#``
starts a comment); command-line overrides win over file values. One
master seed deterministically derives every stage seed, so a full run
is reproducible from (config, seed) alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

import numpy as np

STAGE_CODES = {"synth": 0, "estimate": 1, "lw": 2, "calibrate": 3, "decompose": 4}

DEFAULT_SPECS = ("all", "son-father", "son-mother", "daughter-father", "daughter-mother")
DEFAULT_LW_SPECS = ("son-father", "son-mother", "daughter-father")


@dataclass
class PipelineConfig:
    """All knobs of a pipeline run."""

    input: str = ""
    output_dir: str = "out"
    seed: int = 0
    stages: tuple[str, ...] = ("estimate", "lw", "calibrate", "decompose")

    cohort_start: int | None = None
    cohort_end: int | None = None
    child_age_center: int = 36
    child_age_halfwidth: int = 1
    parent_age_center: int = 18
    parent_age_halfwidth: int = 1

    participation_threshold: float = 10_000.0
    participation_scope: str = "none"  # none|child|parent|both
    gender_rerank: bool = True
    specs: tuple[str, ...] = DEFAULT_SPECS
    include_ige: bool = True

    lw_specs: tuple[str, ...] = DEFAULT_LW_SPECS
    token_divisor: float = 100.0

    calib_n_sim: int = 100_000
    calib_max_iters: int = 200
    calib_tolerance: float = 1e-6
    calib_fd_step: float = 1e-3
    calib_patience: int = 15

    decomp_baseline: str = "first"  # "first" or a cohort year
    decomp_n: int = 100_000

    extras: dict = field(default_factory=dict, repr=False)

    def cohort_range(self, available) -> list[int]:
        lo = self.cohort_start if self.cohort_start is not None else min(available)
        hi = self.cohort_end if self.cohort_end is not None else max(available)
        cohorts = [c for c in sorted(set(available)) if lo <= c <= hi]
        if not cohorts:
            raise ValueError(f"no cohorts in range {lo}..{hi}")
        return cohorts

    def as_items(self) -> list[tuple[str, str]]:
        items = []
        for f in fields(self):
            if f.name == "extras":
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            items.append((f.name, "" if value is None else str(value)))
        return items

    def config_hash(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in self.as_items())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _coerce(name: str, raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if current is None:  # optional ints (cohort bounds)
        return int(raw) if raw else None
    return raw


def apply_setting(config: PipelineConfig, key: str, raw: str) -> None:
    """Set one key; unknown keys are kept in ``extras`` and hashed along."""
    known = {f.name for f in fields(config)} - {"extras"}
    if key not in known:
        config.extras[key] = raw
        return
    setattr(config, key, _coerce(key, raw, getattr(config, key)))


def parse_config_file(path, config: PipelineConfig | None = None) -> PipelineConfig:
    """Read ``key = value`` lines into a config."""
    config = config or PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = line.split("=", 1)
            apply_setting(config, key.strip(), raw.strip())
    return config


def stage_seed(master_seed: int, stage: str) -> int:
    """Derive one stage's seed: SeedSequence([master, stage_code])."""
    if stage not in STAGE_CODES:
        raise ValueError(f"unknown stage {stage!r}")
    seq = np.random.SeedSequence([master_seed, STAGE_CODES[stage]])
    return int(seq.generate_state(1)[0])
