"""Run manifests: what produced a set of output files."""

import platform
from pathlib import Path

import django
import numpy as np
import scipy

from basis.serializers import FORMAT_VERSION
from cli_io.files import atomic_write_json

MANIFEST_FILENAME = "manifest.json"


def package_versions() -> dict:
    return {
        "python": platform.python_version(),
        "django": django.get_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def build_manifest(command: str, seed: int, config: dict, outputs: list[str], checksum: str | None = None) -> dict:
    return {
        "command": command,
        "seed": seed,
        "format_version": FORMAT_VERSION,
        "versions": package_versions(),
        "config": config,
        "checkpoint_sha256": checksum,
        "outputs": sorted(outputs),
    }


def write_manifest(out_dir, manifest: dict) -> Path:
    return atomic_write_json(Path(out_dir) / MANIFEST_FILENAME, manifest)
