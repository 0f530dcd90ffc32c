import hashlib
import json
import os
import tempfile
from collections import OrderedDict
from collections.abc import Callable, Hashable
from pathlib import Path
from threading import Lock
from typing import Any

import numpy as np

import config
from logger import get_logger

logger = get_logger()


class LRUCache:
    """
    Thread-safe Least Recently Used (LRU) cache.
    Automatically evicts least recently used items when capacity is reached.

    During exploration it holds normalized transition matrices keyed by
    `param_explorer.transition_key` (resolved lambda and per-multiplex
    delta), so grid variants that differ only in r, tau, eta or the solver
    settings share one matrix.
    """

    def __init__(self, capacity: int = config.TRANSITION_CACHE_CAPACITY):
        self.capacity = capacity
        self.cache: OrderedDict = OrderedDict()
        self.lock = Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable) -> Any | None:
        with self.lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                self.hits += 1
                return self.cache[key]
            self.misses += 1
            return None

    def put(self, key: Hashable, value: Any) -> None:
        with self.lock:
            if key in self.cache:
                self.cache.move_to_end(key)
            else:
                if len(self.cache) >= self.capacity:
                    oldest_key = next(iter(self.cache))
                    del self.cache[oldest_key]
                    logger.debug(f"LRU cache evicted: {oldest_key}")
            self.cache[key] = value

    def get_or_build(self, key: Hashable, factory: Callable[[], Any]) -> Any:
        """
        Returns the cached value, building and caching it on a miss.
        Concurrent misses on one key may build twice; the last put wins.
        """
        value = self.get(key)
        if value is None:
            value = factory()
            self.put(key, value)
        return value

    def clear(self) -> None:
        with self.lock:
            self.cache.clear()
            logger.debug("LRU cache cleared")

    def get_stats(self) -> dict[str, Any]:
        """
        Returns cache statistics.

        Returns:
            Dictionary with hits, misses, size, capacity, hit_rate
        """
        with self.lock:
            total = self.hits + self.misses
            hit_rate = (self.hits / total * 100) if total > 0 else 0
            return {
                "hits": self.hits,
                "misses": self.misses,
                "size": len(self.cache),
                "capacity": self.capacity,
                "hit_rate": f"{hit_rate:.2f}%",
            }


def fingerprint(payload: Any) -> str:
    """Stable SHA-256 of a JSON-serializable payload."""
    encoded = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


class ScoreCache:
    """
    On-disk cache of score vectors, one `.npz` file per variant name.
    Each entry stores the fingerprint of the inputs that produced it and is
    ignored when the fingerprint no longer matches.
    """

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.lock = Lock()
        self.hits = 0
        self.misses = 0

    def path_for(self, name: str) -> Path:
        return self.directory / f"{name}.npz"

    def get(self, name: str, key: str) -> dict[str, np.ndarray] | None:
        path = self.path_for(name)
        try:
            with np.load(path, allow_pickle=False) as archive:
                if str(archive["fingerprint"]) != key:
                    logger.debug(f"Score cache entry {name} is stale")
                    with self.lock:
                        self.misses += 1
                    return None
                entry = {field: archive[field] for field in archive.files if field != "fingerprint"}
        except FileNotFoundError:
            with self.lock:
                self.misses += 1
            return None
        except (OSError, ValueError, KeyError) as e:
            logger.warning(f"Unreadable score cache entry {path}: {e}")
            with self.lock:
                self.misses += 1
            return None

        with self.lock:
            self.hits += 1
        return entry

    def put(self, name: str, key: str, arrays: dict[str, np.ndarray]) -> None:
        """Writes an entry atomically (temp file, then rename)."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(name)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.", suffix=".npz")
        try:
            with os.fdopen(fd, "wb") as f:
                np.savez(f, fingerprint=np.array(key), **arrays)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def entries(self) -> list[str]:
        if not self.directory.exists():
            return []
        return sorted(p.stem for p in self.directory.glob("*.npz"))

    def get_stats(self) -> dict[str, Any]:
        with self.lock:
            return {"hits": self.hits, "misses": self.misses, "entries": len(self.entries())}
