"""
Module for caching posed KDSM lattices using an LRU cache
"""
import functools
import hashlib
import logging
import threading
from collections import OrderedDict
from typing import Any, Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)


class LRUCache:
    """LRU cache for storing computation results"""

    def __init__(self, maxsize: int = 128):
        """
        Args:
            maxsize: Maximum number of elements in cache
        """
        self.maxsize = maxsize
        self.cache: "OrderedDict[str, Any]" = OrderedDict()
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    @staticmethod
    def make_key(*parts) -> str:
        """Hash arrays by content and everything else by repr"""
        digest = hashlib.sha1()
        for part in parts:
            if isinstance(part, np.ndarray):
                digest.update(str(part.shape).encode())
                digest.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
            else:
                digest.update(repr(part).encode())
            digest.update(b"|")
        return digest.hexdigest()

    def get(self, key: str) -> Optional[Any]:
        """Get value from cache"""
        with self._lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                self.hits += 1
                return self.cache[key]
            self.misses += 1
            return None

    def set(self, key: str, value: Any):
        """Set value in cache"""
        with self._lock:
            if key in self.cache:
                self.cache.move_to_end(key)
            elif len(self.cache) >= self.maxsize:
                oldest_key, _ = self.cache.popitem(last=False)
                logger.debug(f"Removed stale cache element: {oldest_key[:8]}...")
            self.cache[key] = value

    def clear(self):
        """Clear cache"""
        with self._lock:
            self.cache.clear()
            self.hits = 0
            self.misses = 0
        logger.info("Cache cleared")

    def size(self) -> int:
        """Return current cache size"""
        return len(self.cache)


_posed_kdsm_cache = LRUCache(maxsize=32)


def get_posed_kdsm_cache() -> LRUCache:
    """Return cache for posed KDSM vertices and their locators"""
    return _posed_kdsm_cache


def cached_posed_kdsm(func: Callable) -> Callable:
    """
    Decorator memoizing a posed-KDSM builder on the pose content

    The wrapped function takes (rig, pose) and its result must not be mutated by callers.
    The rig is keyed by identity, the pose by its angles and translation.
    """
    @functools.wraps(func)
    def wrapper(rig, pose, *args, **kwargs):
        cache = get_posed_kdsm_cache()
        key = cache.make_key(id(rig), pose.angles, pose.translation, args, sorted(kwargs.items()))
        cached = cache.get(key)
        # Entries hold their rig so its id cannot be reused while cached
        if cached is not None and cached[0] is rig:
            logger.debug(f"Posed KDSM for pose {pose.pose_id} found in cache")
            return cached[1]
        result = func(rig, pose, *args, **kwargs)
        cache.set(key, (rig, result))
        return result

    return wrapper
