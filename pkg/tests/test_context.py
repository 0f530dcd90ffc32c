"""Tests for context module."""

import io
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import config
from context import RunContext, get_context, reset_context, set_context


@pytest.fixture(autouse=True)
def clean_context() -> None:
    """Reset context before and after each test."""
    reset_context()
    yield
    reset_context()


class TestRunContext:
    """Tests for RunContext dataclass."""

    def test_defaults(self, tmp_path) -> None:
        ctx = RunContext(command="rank", out_dir=tmp_path)

        assert ctx.rng_seed == config.DEFAULT_RNG_SEED
        assert ctx.workers == 1
        assert ctx.manifest.data["command"] == "rank"
        assert ctx.output("ranking_m.tsv") == tmp_path / "ranking_m.tsv"

    def test_workers_never_below_one(self, tmp_path) -> None:
        assert RunContext(command="rank", out_dir=tmp_path, workers=0).workers == 1

    def test_create_default_makes_out_dir(self, tmp_path) -> None:
        """Test that create_default creates the output directory and picks CPU workers"""
        out = tmp_path / "nested" / "out"
        ctx = RunContext.create_default("loocv", out, rng_seed=3)

        assert out.is_dir()
        assert ctx.rng_seed == 3
        assert ctx.workers == config.get_default_workers()
        assert ctx.manifest.data["rng_seed"] == 3

    def test_progress_respects_quiet(self, tmp_path) -> None:
        stream = io.StringIO()
        RunContext(command="rank", out_dir=tmp_path, stream=stream).progress("wrote x")
        RunContext(command="rank", out_dir=tmp_path, quiet=True, stream=stream).progress("hidden")

        assert stream.getvalue() == "wrote x\n"


class TestContextFunctions:
    """Tests for context management functions."""

    def test_set_and_get_context(self, tmp_path) -> None:
        """Test setting and getting context."""
        ctx = RunContext(command="rank", out_dir=tmp_path)

        set_context(ctx)

        assert get_context() is ctx

    def test_reset_context(self, tmp_path) -> None:
        """Test resetting context."""
        set_context(RunContext(command="rank", out_dir=tmp_path))
        reset_context()

        with pytest.raises(RuntimeError, match="no active run context"):
            get_context()

    def test_get_context_without_run(self) -> None:
        with pytest.raises(RuntimeError):
            get_context()
