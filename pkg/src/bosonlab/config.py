"""Strict TOML study configuration: flat typed keys, sections per module.

Unknown keys are rejected by name before anything is allocated; there is no
expression evaluation.  The canonical file bytes are hashed into every output
so runs are diffable and reproducible.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grid import GridSpec, make_grid
from .manybody import DEFAULT_BUDGET_BYTES
from .potentials import BUMP, DISK, ExternalPotentialSpec, PairPotentialSpec


class ValidationError(ValueError):
    """Configuration rejected; exit code 2."""


STUDY_KINDS = (
    "nls-run",
    "ground-state",
    "manybody-run",
    "converge-sweep",
    "gronwall",
    "variance-report",
    "stability-probe",
    "check-invariants",
)

_SECTION_KEYS = {
    "study": {"kind", "output_dir", "seed", "memory_budget_bytes", "threads"},
    "grid": {"box_length", "points_per_side"},
    "pair": {"shape", "amplitude", "radius"},
    "external": {"family", "coupling", "exponent", "time_dependence", "rate"},
    "nls": {
        "coupling",
        "dt",
        "t_final",
        "snapshot_stride",
        "initial",
        "allow_blowup",
    },
    "manybody": {"n_particles", "beta", "dt", "t_final", "snapshot_stride"},
    "sweep": {"n_list", "beta_list", "t_final", "dt", "snapshot_stride", "phi0"},
    "variance": {"n_list", "beta_list", "tensor_max_n"},
    "stability": {"n_list", "beta"},
}

_REQUIRED_SECTIONS = {
    "nls-run": ("grid", "nls"),
    "ground-state": ("grid", "nls"),
    "manybody-run": ("grid", "pair", "manybody"),
    "converge-sweep": ("grid", "pair", "sweep"),
    "gronwall": ("grid", "pair", "manybody"),
    "variance-report": ("grid", "pair", "variance"),
    "stability-probe": ("grid", "pair", "stability"),
    "check-invariants": (),
}


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    output_dir: Path
    seed: int
    memory_budget_bytes: int
    threads: int
    config_hash: str
    raw: dict

    def grid(self) -> GridSpec:
        sec = self._section("grid")
        return make_grid(
            _typed(sec, "grid", "box_length", (int, float)),
            _typed(sec, "grid", "points_per_side", int),
        )

    def pair(self) -> PairPotentialSpec:
        sec = self._section("pair")
        shape = _typed(sec, "pair", "shape", str)
        if shape not in (DISK, BUMP):
            raise ValidationError(
                f"pair.shape must be {DISK!r} or {BUMP!r}, got {shape!r}"
            )
        return PairPotentialSpec(
            shape,
            _typed(sec, "pair", "amplitude", (int, float)),
            _typed(sec, "pair", "radius", (int, float)),
        )

    def external(self) -> ExternalPotentialSpec:
        sec = self.raw.get("external", {})
        return ExternalPotentialSpec(
            family=sec.get("family", "zero"),
            coupling=float(sec.get("coupling", 1.0)),
            exponent=float(sec.get("exponent", 2.0)),
            time_dependence=sec.get("time_dependence", "static"),
            rate=float(sec.get("rate", 0.0)),
        )

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def _section(self, name: str) -> dict:
        if name not in self.raw:
            raise ValidationError(f"missing required section [{name}]")
        return self.raw[name]


def _typed(sec: dict, section: str, key: str, types) -> object:
    if key not in sec:
        raise ValidationError(f"missing key {section}.{key}")
    val = sec[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise ValidationError(
            f"{section}.{key} has type {type(val).__name__}, expected "
            f"{types if isinstance(types, type) else '/'.join(t.__name__ for t in types)}"
        )
    return val


def load_config(path) -> StudyConfig:
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(raw_bytes.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"config is not valid TOML: {exc}") from exc

    for section, content in data.items():
        if section not in _SECTION_KEYS:
            raise ValidationError(f"unknown section [{section}]")
        if not isinstance(content, dict):
            raise ValidationError(f"[{section}] must be a table")
        for key in content:
            if key not in _SECTION_KEYS[section]:
                raise ValidationError(f"unknown key {section}.{key}")

    study = data.get("study", {})
    if "kind" not in study:
        raise ValidationError("missing key study.kind")
    kind = study["kind"]
    if kind not in STUDY_KINDS:
        raise ValidationError(
            f"unknown study kind {kind!r}; valid kinds: {', '.join(STUDY_KINDS)}"
        )
    for sec in _REQUIRED_SECTIONS[kind]:
        if sec not in data:
            raise ValidationError(f"study kind {kind!r} needs section [{sec}]")

    return StudyConfig(
        kind=kind,
        output_dir=Path(study.get("output_dir", "out")),
        seed=int(study.get("seed", 0)),
        memory_budget_bytes=int(study.get("memory_budget_bytes", DEFAULT_BUDGET_BYTES)),
        threads=int(study.get("threads", 1)),
        config_hash=hashlib.sha256(raw_bytes).hexdigest()[:16],
        raw=data,
    )
