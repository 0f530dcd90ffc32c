import hashlib
import json
import os
import sys
import tempfile
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import config
from logger import get_logger

logger = get_logger()

PACKAGE_NAME = "multiwalk"


def atomic_write(file_path: Path, content: str) -> None:
    """
    Atomically writes content to a file using temp file + rename.
    Prevents partial writes and corruption.

    Raises:
        OSError: If write operation fails
    """
    file_path.parent.mkdir(parents=True, exist_ok=True)

    fd, temp_path = tempfile.mkstemp(
        dir=file_path.parent, prefix=f".{file_path.name}.", suffix=".tmp"
    )

    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())

        if sys.platform == "win32":
            try:
                if file_path.exists():
                    file_path.unlink()
            except FileNotFoundError:
                pass

        os.replace(temp_path, file_path)
    except Exception:
        try:
            os.unlink(temp_path)
        except OSError:
            pass
        raise


def file_digest(path: Path, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(chunk_size):
            digest.update(chunk)
    return digest.hexdigest()


def tool_version() -> str:
    try:
        return version(PACKAGE_NAME)
    except PackageNotFoundError:
        return "unknown"


class RunManifest:
    """
    Everything needed to reproduce a run: command, inputs with their digests,
    effective parameters and solver statistics. Holds no timestamps so reruns
    produce identical files.
    """

    def __init__(self, command: str, rng_seed: int = config.DEFAULT_RNG_SEED):
        self.data: dict[str, Any] = {
            "tool": PACKAGE_NAME,
            "version": tool_version(),
            "command": command,
            "rng_seed": rng_seed,
            "inputs": {},
            "parameters": {},
            "results": {},
        }

    def add_input(self, path: Path, base: Path | None = None) -> None:
        path = Path(path)
        label = str(path.relative_to(base)) if base is not None and path.is_relative_to(base) else path.name
        self.data["inputs"][label] = file_digest(path)

    def add_inputs(self, paths: list[Path], base: Path | None = None) -> None:
        for path in paths:
            self.add_input(path, base)

    def set_parameters(self, parameters: dict[str, Any]) -> None:
        self.data["parameters"].update(parameters)

    def set_result(self, key: str, value: Any) -> None:
        self.data["results"][key] = value

    def get_stats(self) -> dict[str, Any]:
        return {"inputs": len(self.data["inputs"]), "results": sorted(self.data["results"])}

    def save(self, out_dir: Path) -> Path:
        path = Path(out_dir) / config.MANIFEST_NAME
        try:
            content = json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n"
            atomic_write(path, content)
            logger.debug(f"Manifest saved: {len(self.data['inputs'])} inputs tracked")
        except Exception as e:
            logger.error(f"Error saving manifest: {e}", exc_info=True)
            raise
        return path

    @staticmethod
    def load(out_dir: Path) -> dict[str, Any]:
        path = Path(out_dir) / config.MANIFEST_NAME
        with open(path, encoding="utf-8") as f:
            return json.load(f)
