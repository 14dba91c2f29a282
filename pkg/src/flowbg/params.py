"""Flat parameter vector with named segments and a matching gradient buffer.

Models declare their parameter shapes up front; the store allocates one
contiguous float64 vector plus a same-shape gradient accumulator and hands
out reshaped views.  Views stay valid because updates happen in place
(``store.values[:] = ...``); the segments tile the vector exactly with no
gaps or overlaps.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["ParamStore"]


class ParamStore:
    def __init__(self, shapes: dict[str, tuple]):
        self.shapes = {name: tuple(shape) for name, shape in shapes.items()}
        offset = 0
        self.segments: dict[str, tuple[int, int]] = {}
        for name, shape in self.shapes.items():
            size = int(np.prod(shape, dtype=int)) if shape else 1
            self.segments[name] = (offset, size)
            offset += size
        self.size = offset
        self.values = np.zeros(self.size)
        self.grads = np.zeros(self.size)
        self._views = {
            name: self.values[off : off + size].reshape(self.shapes[name])
            for name, (off, size) in self.segments.items()
        }
        self._grad_views = {
            name: self.grads[off : off + size].reshape(self.shapes[name])
            for name, (off, size) in self.segments.items()
        }

    def view(self, name: str) -> np.ndarray:
        """Writable view of one named segment of the value vector."""
        return self._views[name]

    def grad_view(self, name: str) -> np.ndarray:
        return self._grad_views[name]

    def zero_grads(self) -> None:
        self.grads[:] = 0.0

    def set_values(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got shape {values.shape}")
        self.values[:] = values

    def copy_values(self) -> np.ndarray:
        return self.values.copy()

    def fingerprint(self) -> bytes:
        """Digest of the current values, used to detect stale gradient tapes."""
        return hashlib.blake2b(self.values.tobytes(), digest_size=16).digest()
