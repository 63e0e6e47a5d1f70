import os
import tempfile
from abc import ABC, abstractmethod
from typing import Dict

import pandas as pd

from .config import RunManifest

MANIFEST_PREFIX = "# manifest_sha256="
FLOAT_FORMAT = "%.12g"


def render_table(frame: pd.DataFrame, manifest: RunManifest) -> str:
    """CSV text with a leading manifest-hash comment; missing values stay empty."""
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    return f"{MANIFEST_PREFIX}{manifest.digest()}\n{body}"


class ResultStore(ABC):
    """Abstract base class for experiment result stores."""

    @abstractmethod
    def save_table(self, name: str, frame: pd.DataFrame, manifest: RunManifest):
        """Store a result table stamped with the manifest hash."""
        pass

    @abstractmethod
    def save_manifest(self, name: str, manifest: RunManifest):
        pass

    @abstractmethod
    def load_manifest(self, name: str) -> RunManifest:
        pass


class FileResultStore(ResultStore):
    """Writes ``<name>.csv`` and ``<name>.json`` under ``output_dir``.

    Each file is written to a temporary sibling and renamed into place.
    """

    def __init__(self, output_dir: str):
        self.output_dir = output_dir

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def _write(self, filename: str, text: str):
        os.makedirs(self.output_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.output_dir, prefix=f".{filename}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, self.path(filename))
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise

    def save_table(self, name: str, frame: pd.DataFrame, manifest: RunManifest):
        self._write(f"{name}.csv", render_table(frame, manifest))

    def save_manifest(self, name: str, manifest: RunManifest):
        self._write(f"{name}.json", manifest.to_json())

    def load_manifest(self, name: str) -> RunManifest:
        with open(self.path(f"{name}.json"), encoding="utf-8") as f:
            return RunManifest.from_json(f.read())


class InMemoryResultStore(ResultStore):
    """Result store keeping rendered text in memory (used for tests)."""

    def __init__(self):
        self.tables: Dict[str, str] = {}
        self.manifests: Dict[str, str] = {}

    def save_table(self, name: str, frame: pd.DataFrame, manifest: RunManifest):
        self.tables[name] = render_table(frame, manifest)

    def save_manifest(self, name: str, manifest: RunManifest):
        self.manifests[name] = manifest.to_json()

    def load_manifest(self, name: str) -> RunManifest:
        return RunManifest.from_json(self.manifests[name])
