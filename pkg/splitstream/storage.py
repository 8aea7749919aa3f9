"""Reading laws and configs from disk, and writing CSV/JSON results with provenance."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, TextIO

import numpy as np
from pydantic import BaseModel, ValidationError

from .errors import ConfigError, InvalidLaw
from .models import BranchingLaw, SplittingMeasure
from .schemas import OUTPUT_SCHEMAS, BranchingLawPayload, ExperimentConfig, MeasurePayload, Provenance
from .splitting import derive_splitting_measure

logger = logging.getLogger(__name__)


def _read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path} does not exist")
    try:
        with path.open("r", encoding="utf8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _validate(model: type[BaseModel], data: Any, path: Path) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_law(path: Path) -> BranchingLaw:
    payload = _validate(BranchingLawPayload, _read_json(path), path)
    try:
        return payload.to_domain()
    except InvalidLaw as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_measure(path: Path) -> SplittingMeasure:
    payload = _validate(MeasurePayload, _read_json(path), path)
    try:
        return payload.to_domain()
    except InvalidLaw as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_measure_or_law(path: Path) -> tuple[SplittingMeasure, BranchingLaw | None]:
    """Read either a branching law (``branches``) or a splitting measure (``atoms``)."""

    data = _read_json(path)
    if isinstance(data, dict) and "branches" in data:
        law = load_law(path)
        return derive_splitting_measure(law), law
    if isinstance(data, dict) and "atoms" in data:
        return load_measure(path), None
    raise ConfigError(f"{path} holds neither 'branches' nor 'atoms'")


def read_output(path: Path) -> BaseModel:
    """Load a JSON result and validate it against the model of the command that wrote it."""

    data = _read_json(path)
    command = data.get("provenance", {}).get("command") if isinstance(data, dict) else None
    if command not in OUTPUT_SCHEMAS:
        raise ConfigError(f"{path} is not a splitstream JSON output")
    return _validate(OUTPUT_SCHEMAS[command], data, path)


def load_config(path: Path) -> ExperimentConfig:
    """Load an experiment config; relative paths are taken from the config's folder."""

    path = Path(path)
    config = _validate(ExperimentConfig, _read_json(path), path)
    updates = {
        name: path.parent / getattr(config, name)
        for name in ("law", "outputs")
        if not getattr(config, name).is_absolute()
    }
    config = config.model_copy(update=updates)
    if not config.law.exists():
        raise ConfigError(f"law file {config.law} referenced by {path} does not exist")
    return config


def config_digest(settings: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON of the effective settings."""

    canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf8")).hexdigest()


def make_provenance(command: str, seed: int, settings: Mapping[str, Any]) -> Provenance:
    from . import __version__

    return Provenance(
        version=__version__,
        command=command,
        seed=seed,
        config_sha256=config_digest(settings),
    )


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


class OutputWriter:
    """Write results to a file, into a directory, or to a stream.

    A target that is an existing directory, or has no suffix, is treated as a
    directory and each output lands there under its default name.
    """

    def __init__(
        self,
        provenance: Provenance,
        target: Path | None = None,
        stream: TextIO | None = None,
    ) -> None:
        self.provenance = provenance
        self._target = Path(target) if target is not None else None
        self._stream = stream

    @property
    def target_kind(self) -> str:
        """``stream``, ``directory`` or ``file``."""

        if self._target is None:
            return "stream"
        if self._target.is_dir() or not self._target.suffix:
            return "directory"
        return "file"

    @property
    def suffix(self) -> str:
        return self._target.suffix.lower() if self._target is not None else ""

    @property
    def formats(self) -> tuple[str, ...]:
        """Formats for commands that can write both: JSON for a ``.json`` file, both into a directory, else CSV."""

        kind = self.target_kind
        if kind == "directory":
            return ("json", "csv")
        if kind == "file" and self.suffix == ".json":
            return ("json",)
        return ("csv",)

    def _resolve(self, default_name: str) -> Path | None:
        kind = self.target_kind
        if kind == "stream":
            return None
        if kind == "directory":
            self._target.mkdir(parents=True, exist_ok=True)
            return self._target / default_name
        self._target.parent.mkdir(parents=True, exist_ok=True)
        return self._target

    def _emit(self, text: str, default_name: str) -> Path | None:
        path = self._resolve(default_name)
        if path is None:
            (self._stream or sys.stdout).write(text)
            return None
        with path.open("w", encoding="utf8", newline="") as handle:
            handle.write(text)
        logger.info("wrote %s", path)
        return path

    def provenance_line(self) -> str:
        p = self.provenance
        return (
            f"# {p.tool} {p.version} command={p.command} seed={p.seed} "
            f"config_sha256={p.config_sha256}\n"
        )

    def write_csv(
        self,
        default_name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> Path | None:
        buffer = io.StringIO()
        buffer.write(self.provenance_line())
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
        return self._emit(buffer.getvalue(), default_name)

    def write_json(self, default_name: str, model: BaseModel) -> Path | None:
        return self._emit(model.model_dump_json(indent=2) + "\n", default_name)
