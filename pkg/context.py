"""Run context shared by the command handlers."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import config
from run_manifest import RunManifest


@dataclass
class RunContext:
    """
    Per-invocation settings: output directory, rng seed, worker count and the
    manifest being assembled. Progress lines go to `stream` unless quiet.
    """

    command: str
    out_dir: Path
    rng_seed: int = config.DEFAULT_RNG_SEED
    workers: int = 1
    quiet: bool = False
    stream: TextIO = field(default=sys.stdout, repr=False)
    manifest: RunManifest = field(init=False)

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        self.workers = max(1, int(self.workers))
        self.manifest = RunManifest(self.command, rng_seed=self.rng_seed)

    @classmethod
    def create_default(
        cls,
        command: str,
        out_dir: Path,
        rng_seed: int | None = None,
        workers: int | None = None,
        quiet: bool = False,
    ) -> RunContext:
        context = cls(
            command=command,
            out_dir=out_dir,
            rng_seed=config.DEFAULT_RNG_SEED if rng_seed is None else rng_seed,
            workers=config.get_default_workers() if workers is None else workers,
            quiet=quiet,
        )
        context.out_dir.mkdir(parents=True, exist_ok=True)
        return context

    def progress(self, message: str) -> None:
        if not self.quiet:
            print(message, file=self.stream, flush=True)

    def output(self, name: str) -> Path:
        return self.out_dir / name


_run_context: RunContext | None = None


def get_context() -> RunContext:
    """
    Gets the active run context.

    Raises:
        RuntimeError: No command is running
    """
    if _run_context is None:
        raise RuntimeError("no active run context")
    return _run_context


def set_context(context: RunContext) -> None:
    """
    Sets the active run context.
    Useful for testing with a redirected progress stream.
    """
    global _run_context
    _run_context = context


def reset_context() -> None:
    """Resets the active context to None. Useful for testing."""
    global _run_context
    _run_context = None
