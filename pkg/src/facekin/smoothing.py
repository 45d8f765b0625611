"""Displacement smoothing: polar split, graph-spectral magnitudes, temporal
wavelet angles, multiple-kernel muscle gating, and reversion to Cartesian.

Magnitudes are low-pass filtered on the dense landmark graph by projecting
onto the k eigenvectors of smallest eigenvalue of the unnormalized Laplacian
L = Deg - Adj. Angles are denoised per landmark across time with a Haar
wavelet and a universal soft threshold. The kernel gate multiplies each
smoothed magnitude by the weighted mean of Gaussian RBF kernels centered on
the muscle descriptors:

    r''_j = (1/m) * sum_i w_i * r'_j * exp(-gamma * |X_j - D_i|^2)

Weights are used as given; the division is by the descriptor count m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from .core import MuscleDescriptorSet, frozen_array
from .errors import DisconnectedGraph, KTooLarge, LengthMismatch
from .flow import DisplacementField

_DENSE_EIG_LIMIT = 1200


@dataclass(frozen=True)
class PolarField:
    """Magnitude/angle view of one displacement field.

    magnitudes >= 0; angles in (-pi, pi]; zero vectors get angle 0.
    """

    magnitudes: np.ndarray
    angles: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "magnitudes", frozen_array(self.magnitudes))
        object.__setattr__(self, "angles", frozen_array(self.angles))
        object.__setattr__(self, "valid", frozen_array(np.asarray(self.valid, bool), bool))


@dataclass(frozen=True)
class SmoothedField:
    """Smoothed polar components of one field: spectral magnitudes r',
    wavelet angles theta', kernel-gated magnitudes r''."""

    r_prime: np.ndarray
    theta_prime: np.ndarray
    r_double_prime: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        n = self.r_prime.shape[0]
        for name in ("theta_prime", "r_double_prime", "valid"):
            if getattr(self, name).shape[0] != n:
                raise LengthMismatch(f"{name} length differs from r_prime")
        object.__setattr__(self, "r_prime", frozen_array(self.r_prime))
        object.__setattr__(self, "theta_prime", frozen_array(self.theta_prime))
        object.__setattr__(self, "r_double_prime", frozen_array(self.r_double_prime))
        object.__setattr__(self, "valid", frozen_array(np.asarray(self.valid, bool), bool))


def to_polar(field: DisplacementField) -> PolarField:
    """r = hypot(dx, dy), theta = atan2(dy, dx) mapped into (-pi, pi];
    the zero vector maps to (0, 0)."""
    dx = field.displacements[:, 0]
    dy = field.displacements[:, 1]
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    theta = np.where(theta == -np.pi, np.pi, theta)
    theta = np.where(r == 0.0, 0.0, theta)
    return PolarField(r, theta, field.valid)


def to_cartesian(r: np.ndarray, theta: np.ndarray, valid=None) -> np.ndarray:
    """(n, 2) displacements from polar components; invalid points are (0, 0)."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if r.shape != theta.shape:
        raise LengthMismatch(f"r has shape {r.shape}, theta {theta.shape}")
    d = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape[0] != r.shape[0]:
            raise LengthMismatch("valid length differs from r")
        d = np.where(valid[:, None], d, 0.0)
    return d


# ---------------------------------------------------------------------------
# graph-spectral magnitude smoothing

class SpectralFilter:
    """Low-pass projector onto the k smallest-eigenvalue Laplacian modes of
    a landmark graph. Build once per (graph, k); apply to many fields.

    k == n short-circuits to the identity (complete basis). Small problems
    use a dense symmetric eigensolver; large ones use shift-inverted ARPACK
    with a fixed start vector so results are deterministic.
    """

    def __init__(self, n_points: int, edges: np.ndarray, k: int):
        edges = np.asarray(edges, dtype=np.int64)
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > n_points:
            raise KTooLarge(k, n_points)
        adj = sp.coo_matrix(
            (
                np.ones(2 * len(edges)),
                (
                    np.concatenate([edges[:, 0], edges[:, 1]]),
                    np.concatenate([edges[:, 1], edges[:, 0]]),
                ),
            ),
            shape=(n_points, n_points),
        ).tocsr()
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise DisconnectedGraph(f"graph has {n_comp} components")
        self.n = n_points
        self.k = int(k)
        self._adj = adj
        degrees = np.asarray(adj.sum(axis=1)).ravel()
        if k == n_points:
            self._basis = None
            return
        lap = sp.diags(degrees) - adj
        if n_points <= _DENSE_EIG_LIMIT or k > n_points // 2:
            _, vec = scipy.linalg.eigh(
                lap.toarray(), subset_by_index=[0, k - 1]
            )
            self._basis = vec
        else:
            v0 = np.full(n_points, 1.0 / np.sqrt(n_points))
            _, vec = eigsh(lap.tocsc(), k=k, sigma=-1e-3, which="LM", v0=v0)
            self._basis = vec

    def project(self, values: np.ndarray) -> np.ndarray:
        """Raw orthogonal projection U_k U_k^T r (no clamping)."""
        r = np.asarray(values, dtype=np.float64)
        if r.shape[0] != self.n:
            raise LengthMismatch(f"expected {self.n} values, got {r.shape[0]}")
        if self._basis is None:
            return r.copy()
        return self._basis @ (self._basis.T @ r)

    def impute(self, values: np.ndarray, valid: np.ndarray) -> np.ndarray:
        """Replace invalid entries by the mean of their valid graph
        neighbors (0 when a point has none)."""
        r = np.asarray(values, dtype=np.float64).copy()
        valid = np.asarray(valid, dtype=bool)
        if valid.all():
            return r
        vmask = valid.astype(np.float64)
        sums = self._adj @ (r * vmask)
        counts = self._adj @ vmask
        fill = np.where(counts > 0, sums / np.where(counts > 0, counts, 1.0), 0.0)
        r[~valid] = fill[~valid]
        return r

    def smooth(self, values: np.ndarray, valid=None) -> np.ndarray:
        """Impute invalid entries, project, clamp negatives to 0."""
        r = np.asarray(values, dtype=np.float64)
        if valid is not None:
            r = self.impute(r, valid)
        return np.maximum(self.project(r), 0.0)


def spectral_smooth(values, edges, n_points: int, k: int, valid=None) -> np.ndarray:
    """One-shot spectral smoothing; use SpectralFilter directly to reuse the
    eigenbasis across fields."""
    return SpectralFilter(n_points, edges, k).smooth(values, valid)


# ---------------------------------------------------------------------------
# temporal wavelet angle smoothing

def _haar_forward(x: np.ndarray):
    """Full-depth Haar DWT along axis 0 of (N, cols); N a power of two.
    Returns (approx (1, cols), [finest ... coarsest] detail arrays)."""
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    details = []
    a = x
    while a.shape[0] > 1:
        even = a[0::2]
        odd = a[1::2]
        details.append((even - odd) * inv_sqrt2)
        a = (even + odd) * inv_sqrt2
    return a, details


def _haar_inverse(approx: np.ndarray, details):
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    a = approx
    for d in reversed(details):
        out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=np.float64)
        out[0::2] = (a + d) * inv_sqrt2
        out[1::2] = (a - d) * inv_sqrt2
        a = out
    return a


def _soft(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def wavelet_smooth_angles(theta: np.ndarray, mode: str = "universal-soft") -> np.ndarray:
    """Denoise per-landmark angle time series.

    `theta` is (T, n): one row per displacement field. Per landmark: unwrap
    over time, right-pad symmetrically to the next power of two, full-depth
    Haar DWT, soft-threshold every detail level at sigma*sqrt(2 ln N) with
    sigma = MAD(finest details)/0.6745, invert, truncate, re-wrap into
    (-pi, pi]. Length-1 series pass through unchanged, as does mode="none".
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2:
        raise ValueError("theta must be (n_fields, n_points)")
    t_len = theta.shape[0]
    if t_len <= 1 or mode == "none":
        return theta.copy()
    if mode != "universal-soft":
        raise ValueError(f"unknown wavelet mode {mode!r}")

    unwrapped = np.unwrap(theta, axis=0)
    n_pad = 1 << (t_len - 1).bit_length()
    padded = np.pad(unwrapped, ((0, n_pad - t_len), (0, 0)), mode="symmetric")

    approx, details = _haar_forward(padded)
    finest = details[0]
    med = np.median(finest, axis=0)
    mad = np.median(np.abs(finest - med), axis=0)
    sigma = mad / 0.6745
    thresh = sigma * np.sqrt(2.0 * np.log(n_pad))
    details = [_soft(d, thresh) for d in details]
    rec = _haar_inverse(approx, details)[:t_len]

    wrapped = np.mod(rec + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped


# ---------------------------------------------------------------------------
# multiple-kernel muscle gating

def descriptor_kernels(points: np.ndarray, descriptors: MuscleDescriptorSet) -> np.ndarray:
    """(n, m) Gaussian RBF kernel values exp(-gamma * d^2) between each dense
    landmark and each descriptor, in canonical Euclidean coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    diff = pts[:, None, :] - descriptors.positions[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    return np.exp(-descriptors.gamma * d2)


def mks(r_prime: np.ndarray, points: np.ndarray, descriptors: MuscleDescriptorSet) -> np.ndarray:
    """Kernel-gated magnitudes r''_j = (1/m) sum_i w_i r'_j k_i(X_j)."""
    r = np.asarray(r_prime, dtype=np.float64)
    kernels = descriptor_kernels(points, descriptors)
    gate = (kernels @ descriptors.weights) / descriptors.count
    return r * gate


# ---------------------------------------------------------------------------
# sequence orchestration

def smooth_sequence(
    fields,
    dense_points: np.ndarray,
    edges: np.ndarray,
    descriptors: MuscleDescriptorSet,
    spectral_k: int,
    wavelet_mode: str = "universal-soft",
):
    """Run the full smoothing stack over all fields of one sequence.

    Returns (smoothed_fields, smoothed_components): DisplacementField objects
    with the final Cartesian displacements, and the per-field SmoothedField
    polar internals.
    """
    fields = list(fields)
    if not fields:
        raise LengthMismatch("no displacement fields to smooth")
    n = fields[0].count
    filt = SpectralFilter(n, edges, spectral_k)
    polar = [to_polar(f) for f in fields]
    r_primes = [filt.smooth(p.magnitudes, p.valid) for p in polar]
    thetas = np.stack([p.angles for p in polar], axis=0)
    theta_primes = wavelet_smooth_angles(thetas, mode=wavelet_mode)

    out_fields = []
    out_parts = []
    pts = np.asarray(dense_points, dtype=np.float64)
    for i, f in enumerate(fields):
        r_dd = mks(r_primes[i], pts, descriptors)
        disp = to_cartesian(r_dd, theta_primes[i], f.valid)
        out_fields.append(
            DisplacementField(f.frame_pair, f.points, disp, f.valid)
        )
        out_parts.append(
            SmoothedField(r_primes[i], theta_primes[i], r_dd, f.valid)
        )
    return out_fields, out_parts
