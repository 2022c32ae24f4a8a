"""
In-memory cache for computed distance matrices.
A beta sweep or a NoPS/REPS comparison reuses one matrix per dataset.
"""
import itertools
import logging
import threading
from typing import Any, Dict, Optional

from reps.services.settings import get_cache_size

logger = logging.getLogger(__name__)

# In-memory cache storage
_CACHE: Dict[str, Dict[str, Any]] = {}
_LOCK = threading.Lock()

# monotonically increasing use stamp; wall-clock time can tie
_clock = itertools.count()
_hits = 0
_misses = 0


def get_cache(key: str) -> Optional[Any]:
    """
    Get data from cache if present.

    Args:
        key: Cache key

    Returns:
        Cached data or None if not found
    """
    global _hits, _misses
    with _LOCK:
        entry = _CACHE.get(key)
        if entry is None:
            _misses += 1
            return None
        _hits += 1
        entry["last_used"] = next(_clock)
    logger.debug(f"Cache hit: {key}")
    return entry["data"]


def set_cache(key: str, data: Any) -> None:
    """
    Store data in cache, evicting the least recently used entry when full.

    Args:
        key: Cache key
        data: Data to cache
    """
    max_size = get_cache_size()
    with _LOCK:
        while key not in _CACHE and len(_CACHE) >= max_size:
            oldest_key = min(_CACHE, key=lambda k: _CACHE[k]["last_used"])
            del _CACHE[oldest_key]
            logger.debug(f"Cache at max size, evicted oldest entry: {oldest_key}")

        _CACHE[key] = {"data": data, "last_used": next(_clock)}
    logger.debug(f"Cache set: {key}")


def clear_cache(prefix: Optional[str] = None) -> int:
    """
    Clear cache entries.

    Args:
        prefix: If provided, only clear entries starting with this prefix.
                If None, clear all cache.

    Returns:
        Number of entries cleared
    """
    with _LOCK:
        if prefix is None:
            count = len(_CACHE)
            _CACHE.clear()
            return count

        keys_to_delete = [k for k in _CACHE if k.startswith(prefix)]
        for key in keys_to_delete:
            del _CACHE[key]
        return len(keys_to_delete)


def get_cache_stats() -> Dict[str, Any]:
    """Get cache statistics."""
    with _LOCK:
        return {
            "total_entries": len(_CACHE),
            "max_entries": get_cache_size(),
            "hits": _hits,
            "misses": _misses,
            "keys": list(_CACHE.keys()),
        }
