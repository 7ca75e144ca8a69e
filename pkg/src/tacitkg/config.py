"""Run configuration: one TOML file wiring paths, backend, and run knobs.

Relative paths resolve against the config file's directory.  Ontology,
shapes, prompts, prices, and the cost reference table all default to the
packaged resources, so a minimal config only names the sources manifest
and an output directory.  Credentials never live in config files — live
backends read them from the environment variable named here.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Optional, Union

from .gateway import BackendConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configuration."""


def _resource_path(*parts: str) -> Path:
    return Path(str(importlib_resources.files("tacitkg").joinpath("resources", *parts)))


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch invocation needs, fully resolved."""

    sources_manifest: Path
    store_dir: Path
    out_dir: Path
    backend: BackendConfig
    ontology_path: Path = field(default_factory=lambda: _resource_path("ontology.ttl"))
    shapes_path: Path = field(default_factory=lambda: _resource_path("shapes.ttl"))
    prompts_dir: Optional[Path] = None
    gold_dir: Optional[Path] = None
    prices_path: Path = field(default_factory=lambda: _resource_path("prices.toml"))
    cost_reference_path: Path = field(
        default_factory=lambda: _resource_path("cost_reference.json")
    )
    repetitions: int = 5
    retries_on_invalid: int = 0

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.retries_on_invalid < 0:
            raise ConfigError("retries_on_invalid must be >= 0")

    def validate_paths(self) -> None:
        """Check that every configured input path exists."""
        required = {
            "sources_manifest": self.sources_manifest,
            "ontology": self.ontology_path,
            "shapes": self.shapes_path,
            "prices": self.prices_path,
            "cost_reference": self.cost_reference_path,
        }
        if self.prompts_dir is not None:
            required["prompts_dir"] = self.prompts_dir
        if self.gold_dir is not None:
            required["gold_dir"] = self.gold_dir
        missing = [f"{name} ({path})" for name, path in required.items() if not path.exists()]
        if missing:
            raise ConfigError("missing input path(s): " + "; ".join(missing))

    def prompt_templates(self) -> Optional[dict[str, str]]:
        """Stage-name → template text overrides, if a prompts dir is set."""
        if self.prompts_dir is None:
            return None
        templates = {}
        for stage in ("extraction", "enrichment"):
            path = self.prompts_dir / f"{stage}.txt"
            if path.exists():
                templates[stage] = path.read_text(encoding="utf-8")
        return templates or None


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and resolve a TOML run configuration."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc

    base = path.parent

    def resolve(value: Optional[str]) -> Optional[Path]:
        if not value:
            return None
        candidate = Path(value)
        return candidate if candidate.is_absolute() else (base / candidate)

    paths = data.get("paths", {})
    run = data.get("run", {})
    backend_data = data.get("backend", {})

    manifest = resolve(paths.get("sources_manifest"))
    if manifest is None:
        raise ConfigError(f"{path}: [paths] sources_manifest is required")

    try:
        backend = BackendConfig(
            model_id=backend_data.get("model_id", ""),
            modality=backend_data.get("modality", "transcript"),
            endpoint=backend_data.get("endpoint", ""),
            auth_env_var=backend_data.get("auth_env_var", ""),
            max_retries=int(backend_data.get("max_retries", 3)),
            timeout_s=float(backend_data.get("timeout_s", 60.0)),
            kind=backend_data.get("kind", "replay"),
            fixtures_dir=(
                str(resolve(backend_data.get("fixtures_dir")))
                if backend_data.get("fixtures_dir")
                else None
            ),
            supports_video=bool(backend_data.get("supports_video", False)),
            temperature=(
                float(backend_data["temperature"]) if "temperature" in backend_data else None
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad [backend] section: {exc}") from exc
    if not backend.model_id:
        raise ConfigError(f"{path}: [backend] model_id is required")

    kwargs = dict(
        sources_manifest=manifest,
        store_dir=resolve(paths.get("store_dir", "out/store")) or (base / "out/store"),
        out_dir=resolve(paths.get("out_dir", "out")) or (base / "out"),
        backend=backend,
        prompts_dir=resolve(paths.get("prompts_dir")),
        gold_dir=resolve(paths.get("gold_dir")),
        repetitions=int(run.get("repetitions", 5)),
        retries_on_invalid=int(run.get("retries_on_invalid", 0)),
    )
    for key, name in (
        ("ontology_path", "ontology"),
        ("shapes_path", "shapes"),
        ("prices_path", "prices"),
        ("cost_reference_path", "cost_reference"),
    ):
        resolved = resolve(paths.get(name))
        if resolved is not None:
            kwargs[key] = resolved
    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
