"""Input checks shared by the public functions and estimators."""
import numpy as np

from .exceptions import DimensionMismatch, ZeroChannel
from .tolerances import TOL


def as_complex_vector(x, name, size=None):
    arr = np.asarray(x, dtype=complex)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_complex_matrix(x, name, shape=None):
    arr = np.asarray(x, dtype=complex)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_channel_pair(h1, h2):
    h1 = as_complex_vector(h1, "h1")
    h2 = as_complex_vector(h2, "h2", size=h1.shape[0])
    n1 = float(np.vdot(h1, h1).real)
    n2 = float(np.vdot(h2, h2).real)
    if n1 < TOL.zero_norm or n2 < TOL.zero_norm:
        raise ZeroChannel("channel norm is zero")
    return h1, h2, n1, n2


def check_hermitian(H, name="matrix", rtol=1e-10):
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > rtol * scale:
        raise ValueError(f"{name} is not Hermitian")
    return H


def hermitian_part(H):
    return 0.5 * (H + H.conj().T)
