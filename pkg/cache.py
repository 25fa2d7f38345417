"""
Warm-Start Cache for the Forward Solver

Stores certified primal-dual pairs per feasible region and hands back the pair
whose cost vector is most similar (cosine similarity) to a new query. Training
re-solves the same constraint set with slowly drifting predicted costs, so a
nearby solution usually identifies the active set on the first polish.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config import CacheConfig


@dataclass
class CacheEntry:
    """Cached solution with its cost vector"""
    cost: np.ndarray
    z: np.ndarray
    y: np.ndarray
    hit_count: int = 0


class WarmStartCache:
    """
    In-memory warm-start cache with similarity-based matching.

    Entries are grouped by instance signature (constraints + curvature); within
    a group the oldest entries are evicted once capacity is reached.
    """

    def __init__(self, similarity_threshold: float = None, capacity: int = None):
        self.similarity_threshold = (
            CacheConfig.CACHE_SIMILARITY_THRESHOLD if similarity_threshold is None
            else similarity_threshold
        )
        self.capacity = CacheConfig.CACHE_CAPACITY if capacity is None else capacity
        self.groups: Dict[str, "OrderedDict[int, CacheEntry]"] = {}
        self.lock = threading.Lock()
        self._next_id = 0

        self.stats = {
            'hits': 0,
            'misses': 0,
            'evictions': 0,
            'stores': 0,
        }

    @staticmethod
    def _compute_similarity(vec1: np.ndarray, vec2: np.ndarray) -> float:
        """Cosine similarity; 0.0 for mismatched or zero vectors."""
        if vec1.shape != vec2.shape:
            return 0.0
        mag = float(np.linalg.norm(vec1) * np.linalg.norm(vec2))
        if mag == 0.0:
            return 0.0
        return float(vec1 @ vec2) / mag

    def lookup(self, inst) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """
        Find a warm start for the instance.

        Returns:
            (z, y) copy of the most similar cached solution, or None
        """
        key = inst.signature()
        best: Optional[CacheEntry] = None
        best_similarity = -1.0

        with self.lock:
            group = self.groups.get(key)
            if group:
                for entry in group.values():
                    similarity = self._compute_similarity(inst.cost, entry.cost)
                    if similarity > best_similarity:
                        best_similarity = similarity
                        best = entry

            if best is not None and best_similarity >= self.similarity_threshold:
                best.hit_count += 1
                self.stats['hits'] += 1
                return best.z.copy(), best.y.copy()

            self.stats['misses'] += 1
        return None

    def store(self, inst, sol) -> None:
        """Store a certified solution for the instance."""
        key = inst.signature()
        entry = CacheEntry(cost=inst.cost.copy(), z=np.array(sol.z), y=np.array(sol.y))

        with self.lock:
            group = self.groups.setdefault(key, OrderedDict())
            group[self._next_id] = entry
            self._next_id += 1
            self.stats['stores'] += 1
            while len(group) > self.capacity:
                group.popitem(last=False)
                self.stats['evictions'] += 1

    def invalidate(self, inst=None):
        """
        Invalidate cache entries.

        Args:
            inst: If provided, only drop entries sharing its signature
        """
        with self.lock:
            if inst is not None:
                removed = self.groups.pop(inst.signature(), None)
                count = len(removed) if removed else 0
                print(f"[CACHE] Invalidated {count} entries for one feasible region")
            else:
                count = sum(len(g) for g in self.groups.values())
                self.groups.clear()
                print(f"[CACHE] Invalidated all {count} entries")

    def get_stats(self) -> Dict[str, Any]:
        """Get cache statistics"""
        with self.lock:
            total = self.stats['hits'] + self.stats['misses']
            hit_rate = (self.stats['hits'] / total * 100) if total > 0 else 0

            return {
                'size': sum(len(g) for g in self.groups.values()),
                'regions': len(self.groups),
                'hits': self.stats['hits'],
                'misses': self.stats['misses'],
                'hit_rate': hit_rate,
                'evictions': self.stats['evictions'],
                'stores': self.stats['stores'],
            }


def make_cache() -> Optional[WarmStartCache]:
    """Create a cache when enabled in the configuration, else None."""
    if not CacheConfig.CACHE_ENABLED:
        return None
    return WarmStartCache()
