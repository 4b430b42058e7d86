"""Uniform box meshes with clamped multilinear reads and empirical kernels.

The dynamic-programming engine tabulates value functions on a uniform mesh.
Three facts make this faithful to the order-theoretic checks:

  * multilinear interpolation with edge clamping is a positive linear map of
    node values, so pointwise order, convex combinations and max/min
    structure survive exactly (up to float rounding);
  * a batch of noise draws binned with linear weights gives a nonnegative
    kernel summing to one, and correlating a table with it equals the
    Monte Carlo average of interpolated reads at every node;
  * all reads outside the box clamp to the nearest node (flat extension).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve


@dataclass(frozen=True)
class BoxMesh:
    """Uniform tensor mesh on [-radius, radius]^dim."""

    dim: int
    radius: float
    dx: float

    def __post_init__(self):
        if self.dim < 1 or self.dim > 3:
            raise ValueError("mesh supports dim 1..3")
        if self.radius <= 0 or self.dx <= 0:
            raise ValueError("radius and dx must be positive")
        n = int(np.ceil(self.radius / self.dx))
        axis = np.arange(-n, n + 1) * self.dx
        object.__setattr__(self, "half_n", n)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "shape", (2 * n + 1,) * self.dim)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def nodes(self) -> np.ndarray:
        """(n_nodes, dim) array of node coordinates in C order."""
        grids = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1).reshape(-1, self.dim)

    def tabulate(self, fn) -> np.ndarray:
        """Evaluate a vectorised function on all nodes, shaped like the mesh."""
        return np.asarray(fn(self.nodes()), dtype=float).reshape(self.shape)

    def interp(self, table: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Clamped multilinear interpolation of a node table at arbitrary points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = self.half_n
        # clamp points to the box first: outside reads take the edge value
        rel = np.clip(pts / self.dx + n, 0.0, 2.0 * n)
        base = np.minimum(np.floor(rel), 2 * n - 1).astype(np.int64)
        frac = rel - base
        out = np.zeros(pts.shape[0])
        for corner in range(1 << self.dim):
            w = np.ones(pts.shape[0])
            idx = []
            for axis in range(self.dim):
                if corner >> axis & 1:
                    w = w * frac[:, axis]
                    idx.append(base[:, axis] + 1)
                else:
                    w = w * (1.0 - frac[:, axis])
                    idx.append(base[:, axis])
            out += w * table[tuple(idx)]
        return out

    def interp_weights(self, pts: np.ndarray):
        """Flat corner indices and weights for later repeated gathers."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = self.half_n
        rel = np.clip(pts / self.dx + n, 0.0, 2.0 * n)
        base = np.minimum(np.floor(rel), 2 * n - 1).astype(np.int64)
        frac = rel - base
        strides = np.array([int(np.prod(self.shape[a + 1 :])) for a in range(self.dim)])
        idx = np.empty((1 << self.dim, pts.shape[0]), dtype=np.int64)
        wts = np.empty((1 << self.dim, pts.shape[0]))
        for corner in range(1 << self.dim):
            w = np.ones(pts.shape[0])
            flat = np.zeros(pts.shape[0], dtype=np.int64)
            for axis in range(self.dim):
                if corner >> axis & 1:
                    w = w * frac[:, axis]
                    flat += (base[:, axis] + 1) * strides[axis]
                else:
                    w = w * (1.0 - frac[:, axis])
                    flat += base[:, axis] * strides[axis]
            idx[corner] = flat
            wts[corner] = w
        return idx, wts

    @staticmethod
    def gather(table: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
        flat = table.reshape(-1)
        out = wts[0] * flat[idx[0]]
        for c in range(1, idx.shape[0]):
            out += wts[c] * flat[idx[c]]
        return out

    def bin_draws(self, draws: np.ndarray):
        """Linear-bin draws into a kernel: nonnegative weights summing to 1.

        Returns (kernel, lo) where kernel[m] is the weight of the offset
        (lo + m) * dx, multi-indexed per axis.
        """
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        n_draws = draws.shape[0]
        rel = draws / self.dx
        base = np.floor(rel).astype(np.int64)
        frac = rel - base
        lo = base.min(axis=0)
        extent = base.max(axis=0) - lo + 2
        kernel = np.zeros(tuple(extent))
        local = base - lo
        for corner in range(1 << self.dim):
            w = np.ones(n_draws)
            idx = []
            for axis in range(self.dim):
                if corner >> axis & 1:
                    w = w * frac[:, axis]
                    idx.append(local[:, axis] + 1)
                else:
                    w = w * (1.0 - frac[:, axis])
                    idx.append(local[:, axis])
            np.add.at(kernel, tuple(idx), w)
        kernel /= n_draws
        return kernel, lo

    def convolve_clamped(self, table: np.ndarray, kernel: np.ndarray, lo: np.ndarray) -> np.ndarray:
        """result(x_j) = sum_m kernel[m] * table(x_{j + lo + m}), edge-clamped.

        Exactly the common-random-numbers Monte Carlo average of clamped
        interpolated reads at every node, computed in one pass.
        """
        return self.convolve_clamped_batch(table[None, ...], kernel, lo)[0]

    def convolve_clamped_batch(
        self, tables: np.ndarray, kernel: np.ndarray, lo: np.ndarray
    ) -> np.ndarray:
        """Batched variant: tables has a leading batch axis; one FFT pass."""
        lo = np.asarray(lo, dtype=np.int64)
        pad = [(0, 0)]
        for axis in range(self.dim):
            k = kernel.shape[axis]
            pad_lo = max(0, -(int(lo[axis])))          # reads below the box
            pad_hi = max(0, int(lo[axis]) + k - 1)     # reads above the box
            pad.append((pad_lo, pad_hi))
        padded = np.pad(tables, pad, mode="edge")
        if kernel.size <= 32:
            out = _direct_correlate(padded, kernel, self.dim)
        else:
            # correlation == convolution with the kernel flipped on all axes
            flipped = kernel[tuple(slice(None, None, -1) for _ in range(self.dim))]
            out = fftconvolve(padded, flipped[None, ...], mode="valid",
                              axes=list(range(1, self.dim + 1)))
        slices = [slice(None)]
        for axis in range(self.dim):
            start = pad[axis + 1][0] + int(lo[axis])
            slices.append(slice(start, start + tables.shape[axis + 1]))
        return np.ascontiguousarray(out[tuple(slices)])


def _direct_correlate(padded: np.ndarray, kernel: np.ndarray, dim: int) -> np.ndarray:
    """Small-kernel exact correlation (keeps zero-noise cases rounding-free)."""
    out_shape = (padded.shape[0],) + tuple(
        padded.shape[a + 1] - kernel.shape[a] + 1 for a in range(dim)
    )
    out = np.zeros(out_shape)
    for m in np.ndindex(*kernel.shape):
        w = kernel[m]
        if w == 0.0:
            continue
        sl = (slice(None),) + tuple(slice(m[a], m[a] + out_shape[a + 1]) for a in range(dim))
        out += w * padded[sl]
    return out
