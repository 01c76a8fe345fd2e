"""
Cache Manager
Disk memoisation of simulated instances and observation replicates
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from diskcache import Cache
from loguru import logger

import config

_MISSING = object()


def _canonical(value: Any) -> Any:
    """JSON-ready form of a key field; floats keep every digit through repr"""
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in sorted(value.items(), key=lambda item: str(item[0]))}
    if isinstance(value, np.ndarray):
        return _canonical(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, (np.integer, np.floating)):
        return _canonical(value.item())
    if isinstance(value, float):
        return repr(value)
    return value


class CacheManager:
    """
    Memoised simulation results keyed by their full configuration

    Keys combine a result kind, a namespace (the code version by default,
    so a new release never reads stale results) and the canonical JSON of
    every field the result depends on. Cache failures are logged and cost a
    recomputation; errors of the wrapped computation propagate.
    """

    def __init__(self, cache_dir: Optional[Path] = None, expire: Optional[int] = config.CACHE_TIMEOUT,
                 namespace: str = config.CODE_VERSION):
        """
        Initialize cache manager

        Args:
            cache_dir: Directory of the diskcache store
            expire: Expiry in seconds (None keeps entries forever)
            namespace: Key namespace
        """
        self.cache_dir = Path(cache_dir or config.CACHE_DIR)
        self.expire = expire
        self.namespace = namespace
        self.hits = 0
        self.misses = 0
        self.cache = Cache(str(self.cache_dir))
        logger.info(f"CacheManager initialized at {self.cache_dir} (namespace {namespace})")

    def make_key(self, kind: str, **fields) -> str:
        """
        Key of a result

        Args:
            kind: Result kind, kept readable as the key prefix
            **fields: Everything the result depends on (JSON-like values and arrays)

        Returns:
            '<kind>:<md5 digest>'
        """
        payload = json.dumps({"namespace": self.namespace, "kind": kind, "fields": _canonical(fields)},
                             sort_keys=True)
        return f"{kind}:{hashlib.md5(payload.encode()).hexdigest()}"

    def lookup(self, key: str) -> Tuple[bool, Any]:
        """(found, value); stored None values count as found"""
        try:
            value = self.cache.get(key, default=_MISSING)
        except Exception as e:
            logger.error(f"Cache read failed for {key}: {e}")
            return False, None
        if value is _MISSING:
            return False, None
        return True, value

    def store(self, key: str, value: Any) -> bool:
        try:
            self.cache.set(key, value, expire=self.expire)
            return True
        except Exception as e:
            logger.error(f"Cache write failed for {key}: {e}")
            return False

    def memoize(self, kind: str, fields: Dict[str, Any], func: Callable, *args, **kwargs) -> Any:
        """
        Cached result of func(*args, **kwargs)

        Args:
            kind: Result kind
            fields: Key fields identifying the result
            func: Computation run on a miss

        Returns:
            Cached or freshly computed value
        """
        key = self.make_key(kind, **fields)
        found, value = self.lookup(key)
        if found:
            self.hits += 1
            logger.debug(f"Cache hit: {key}")
            return value

        self.misses += 1
        logger.debug(f"Cache miss: {key}")
        value = func(*args, **kwargs)
        self.store(key, value)
        return value

    def evict(self, kind: str) -> int:
        """Remove every entry of one result kind; returns the number removed"""
        prefix = f"{kind}:"
        removed = 0
        for key in list(self.cache.iterkeys()):
            if isinstance(key, str) and key.startswith(prefix) and self.cache.delete(key):
                removed += 1
        logger.info(f"Evicted {removed} cached '{kind}' entries")
        return removed

    def clear(self) -> bool:
        try:
            self.cache.clear()
            logger.info("Cache cleared")
            return True
        except Exception as e:
            logger.error(f"Cache clear error: {e}")
            return False

    def stats(self) -> Dict[str, Any]:
        return {
            "entries": len(self.cache),
            "volume": self.cache.volume(),
            "hits": self.hits,
            "misses": self.misses,
            "directory": str(self.cache_dir),
        }

    def close(self):
        self.cache.close()

    def __enter__(self) -> "CacheManager":
        return self

    def __exit__(self, *exc):
        self.close()
