# starweyl/caching.py
import hashlib
import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional

from .config import Tolerances, VolterraConfig
from .model import EdgeSpec
from .singular_ode import RegularBasis, SeriesBasis, char_data, solve_volterra


@dataclass
class CacheEntry:
    """Holds a built S-basis and how often it was served."""
    basis: RegularBasis
    hits: int = 0


class BasisCache:
    """Stores S-bases per (edge, lambda, mesh settings); shared by every sweep over one grid."""

    def __init__(self, config: Optional[VolterraConfig] = None, tol: Optional[Tolerances] = None,
                 max_entries: int = 4096):
        self.config = config or VolterraConfig()
        self.tol = tol or Tolerances()
        self.max_entries = max_entries
        self._cache: "OrderedDict[str, CacheEntry]" = OrderedDict()
        self._series: Dict[str, SeriesBasis] = {}
        self._lock = threading.Lock()

    def key(self, edge: EdgeSpec, lam: complex) -> str:
        """Generates a stable hash for an (edge, lambda) request."""
        hasher = hashlib.sha256()
        hasher.update(edge.cache_key().encode())
        hasher.update(repr(complex(lam)).encode())
        hasher.update(repr(self.config).encode())
        return hasher.hexdigest()

    def series(self, edge: EdgeSpec) -> SeriesBasis:
        skey = repr((edge.order, edge.nu, self.config.r_max, self.tol.series))
        with self._lock:
            found = self._series.get(skey)
        if found is None:
            found = SeriesBasis(char_data(edge.nu, edge.order), self.tol.series, self.config.r_max)
            with self._lock:
                self._series.setdefault(skey, found)
        return found

    def get(self, edge: EdgeSpec, lam: complex) -> RegularBasis:
        """Returns the cached S-basis, building it on a miss."""
        key = self.key(edge, lam)
        with self._lock:
            entry = self._cache.get(key)
            if entry is not None:
                entry.hits += 1
                self._cache.move_to_end(key)
                return entry.basis
        basis = solve_volterra(self.series(edge), edge.potential, lam, edge.length, self.config, self.tol)
        with self._lock:
            self._cache[key] = CacheEntry(basis)
            if len(self._cache) > self.max_entries:
                old, _ = self._cache.popitem(last=False)
                logging.debug(f"Evicted S-basis {old[:8]}... from the cache.")
        return basis
