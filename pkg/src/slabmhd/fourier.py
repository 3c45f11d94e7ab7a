"""Fourier helpers on the 2-torus [0, 2*pi)^2.

All horizontal grids in the package are uniform N_u x N_v collocation grids
with the u index on axis 0 and the v index on axis 1; trailing axes (vertical
levels, vector components) are carried through untouched.  Tangential
derivatives are evaluated in spectral space with an optional 2/3 dealiasing
mask, which is switched on throughout the surface-calculus pipeline.
"""

import numpy as np
import scipy.fft as _sfft

TWO_PI = 2.0 * np.pi
TORUS_AREA = TWO_PI * TWO_PI

_WORKERS = 1


def set_workers(n):
    """Worker count for batched FFTs (results are identical for any count)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_workers():
    return _WORKERS


def grid(n_u, n_v):
    """Collocation nodes (U, V) with shape (n_u, n_v)."""
    u = TWO_PI * np.arange(n_u) / n_u
    v = TWO_PI * np.arange(n_v) / n_v
    return np.meshgrid(u, v, indexing="ij")


def wavenumbers(n_u, n_v):
    """Integer wavenumbers (KU, KV) matching fft2 layout, shape (n_u, n_v)."""
    ku = np.fft.fftfreq(n_u, d=1.0 / n_u)
    kv = np.fft.fftfreq(n_v, d=1.0 / n_v)
    return np.meshgrid(ku, kv, indexing="ij")


def kmag(n_u, n_v):
    ku, kv = wavenumbers(n_u, n_v)
    return np.sqrt(ku**2 + kv**2)


def dealias_mask(n_u, n_v):
    """Standard 2/3-rule mask: keep |k| < N/3 in each direction."""
    ku, kv = wavenumbers(n_u, n_v)
    return (np.abs(ku) < n_u / 3.0) & (np.abs(kv) < n_v / 3.0)


def fft2(f):
    return _sfft.fft2(f, axes=(0, 1), workers=_WORKERS)


def ifft2(fh):
    return _sfft.ifft2(fh, axes=(0, 1), workers=_WORKERS).real


def rfft2(f):
    return _sfft.rfft2(f, axes=(0, 1), workers=_WORKERS)


def irfft2(fh, shape2):
    return _sfft.irfft2(fh, s=shape2, axes=(0, 1), workers=_WORKERS)


def rwavenumbers(n_u, n_v):
    """Wavenumbers on the rfft2 half grid, shapes (n_u, n_v//2+1)."""
    ku = np.fft.fftfreq(n_u, d=1.0 / n_u)
    kv = np.arange(n_v // 2 + 1, dtype=float)
    return np.meshgrid(ku, kv, indexing="ij")


def _first_deriv_multipliers(n_u, n_v):
    """i*k multipliers on the half grid with the Nyquist modes zeroed.

    Odd derivatives of the (self-conjugate) Nyquist modes are not
    representable on the collocation grid; the standard convention drops
    them, which keeps two-step derivative compositions real and consistent.
    """
    ku, kv = rwavenumbers(n_u, n_v)
    if n_u % 2 == 0:
        ku = np.where(np.abs(ku) == n_u // 2, 0.0, ku)
    if n_v % 2 == 0:
        kv = np.where(kv == n_v // 2, 0.0, kv)
    return 1j * ku, 1j * kv


def lap_multiplier_half(n_u, n_v):
    """Exact horizontal Laplacian symbol -(ku^2+kv^2) on the half grid
    (Nyquist included; the even symbol is collocation-exact)."""
    ku, kv = rwavenumbers(n_u, n_v)
    return -(ku**2 + kv**2)


def _bcast(spec, ndim):
    """Reshape a (n_u, n_v) multiplier so it broadcasts over trailing axes."""
    return spec.reshape(spec.shape + (1,) * (ndim - 2))


def deriv(f, axis, mask=None):
    """Spectral d/du (axis=0) or d/dv (axis=1) of a real array.

    `mask` is an optional (n_u, n_v) boolean dealias mask applied to the
    differentiated spectrum.  Nyquist modes are always dropped.
    """
    n_u, n_v = f.shape[:2]
    mu, mv = _first_deriv_multipliers(n_u, n_v)
    mult = mu if axis == 0 else mv
    if mask is not None:
        mult = mult * mask[:, : n_v // 2 + 1]
    return irfft2(rfft2(f) * _bcast(mult, f.ndim), (n_u, n_v))


def deriv_uv(f, mask=None):
    """Both horizontal derivatives from a single forward transform."""
    n_u, n_v = f.shape[:2]
    mu, mv = _first_deriv_multipliers(n_u, n_v)
    if mask is not None:
        half = mask[:, : n_v // 2 + 1]
        mu = mu * half
        mv = mv * half
    fh = rfft2(f)
    fu = irfft2(fh * _bcast(mu, f.ndim), (n_u, n_v))
    fv = irfft2(fh * _bcast(mv, f.ndim), (n_u, n_v))
    return fu, fv


def apply_mask(f, mask):
    n_u, n_v = f.shape[:2]
    half = mask[:, : n_v // 2 + 1].astype(float)
    return irfft2(rfft2(f) * _bcast(half, f.ndim), (n_u, n_v))


def mean(f):
    """Mean over the horizontal axes (flat T^2 measure)."""
    return f.mean(axis=(0, 1))


def hs_norm(f, s):
    """Spectral Sobolev norm: ( sum (1+|k|^2)^s |f_k|^2 )^(1/2).

    Coefficients are normalized so that the s=0 norm is the L^2(T^2) norm
    with unit measure density (grid mean of |f|^2, times |T^2|^(1/2)).
    """
    n_u, n_v = f.shape[:2]
    fh = fft2(f) / (n_u * n_v)
    ku, kv = wavenumbers(n_u, n_v)
    w = (1.0 + ku**2 + kv**2) ** s
    return float(np.sqrt(np.sum(w * np.abs(fh) ** 2) * TORUS_AREA))


def gaussian_smooth(f, sigma_cells):
    """Gaussian spectral smoothing with width given in grid cells."""
    if sigma_cells <= 0.0:
        return f.copy()
    n_u, n_v = f.shape[:2]
    ku, kv = wavenumbers(n_u, n_v)
    du = TWO_PI / n_u
    dv = TWO_PI / n_v
    g = np.exp(-0.5 * ((ku * sigma_cells * du) ** 2 + (kv * sigma_cells * dv) ** 2))
    return ifft2(fft2(f) * _bcast(g, f.ndim))


def exp_filter_mask(n_u, n_v, strength, order):
    """Exponential spectral low-pass: exp(-strength * (|k|/k_max)^order)."""
    ku, kv = wavenumbers(n_u, n_v)
    ru = np.abs(ku) / (n_u // 2)
    rv = np.abs(kv) / (n_v // 2)
    return np.exp(-strength * (ru**order + rv**order))


def random_band_limited(n_u, n_v, k_max, rng, amplitude=1.0, decay=1.0):
    """Real random field supported on 0 < max(|ku|,|kv|) <= k_max."""
    ku, kv = wavenumbers(n_u, n_v)
    keep = (np.maximum(np.abs(ku), np.abs(kv)) <= k_max) & ((ku != 0) | (kv != 0))
    coeff = rng.standard_normal((n_u, n_v)) + 1j * rng.standard_normal((n_u, n_v))
    coeff *= keep / (1.0 + ku**2 + kv**2) ** (decay / 2.0)
    f = ifft2(coeff)
    fmax = np.max(np.abs(f))
    if fmax > 0:
        f *= amplitude / fmax
    return f


def div_uv(w1, w2, mask=None):
    """d_u w1 + d_v w2 with a single inverse transform."""
    n_u, n_v = w1.shape[:2]
    mu, mv = _first_deriv_multipliers(n_u, n_v)
    if mask is not None:
        half = mask[:, : n_v // 2 + 1]
        mu = mu * half
        mv = mv * half
    acc = rfft2(w1) * _bcast(mu, w1.ndim) + rfft2(w2) * _bcast(mv, w2.ndim)
    return irfft2(acc, (n_u, n_v))


def lap_uv(f):
    """Exact horizontal Laplacian (including Nyquist modes)."""
    n_u, n_v = f.shape[:2]
    mult = lap_multiplier_half(n_u, n_v)
    return irfft2(rfft2(f) * _bcast(mult, f.ndim), (n_u, n_v))


def invert_surface_gradient(w1, w2):
    """Solve grad_h psi = (w1, w2) on T^2 for the mean-free potential psi.

    Returns (psi, residual) where residual is the L-inf magnitude of the
    non-gradient (2-D curl) part of the data, which is discarded.
    """
    n_u, n_v = w1.shape
    ku, kv = wavenumbers(n_u, n_v)
    k2 = ku**2 + kv**2
    k2[0, 0] = 1.0
    w1h = fft2(w1)
    w2h = fft2(w2)
    psih = (-1j * ku * w1h - 1j * kv * w2h) / k2
    psih[0, 0] = 0.0
    psi = ifft2(psih)
    r1 = w1 - deriv(psi, 0) - mean(w1)
    r2 = w2 - deriv(psi, 1) - mean(w2)
    residual = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    return psi, residual


def pack_real_spectrum(f):
    """Flatten a real (n_u, n_v) field into its n_u*n_v independent real
    rfft2 coefficients (Hermitian redundancy removed)."""
    n_u, n_v = f.shape
    fh = np.fft.rfft2(f)
    cols = n_v // 2 + 1
    parts = []
    for j in range(cols):
        col = fh[:, j]
        if j == 0 or (n_v % 2 == 0 and j == n_v // 2):
            # Hermitian in the row index: rows 0 and n_u/2 are real.
            parts.append(col.real[0:1])
            if n_u % 2 == 0:
                parts.append(col.real[n_u // 2 : n_u // 2 + 1])
                free = col[1 : n_u // 2]
            else:
                free = col[1 : (n_u + 1) // 2]
            parts.append(free.real)
            parts.append(free.imag)
        else:
            parts.append(col.real)
            parts.append(col.imag)
    out = np.concatenate(parts)
    assert out.size == n_u * n_v
    return out


def unpack_real_spectrum(x, n_u, n_v):
    """Inverse of pack_real_spectrum."""
    cols = n_v // 2 + 1
    fh = np.zeros((n_u, cols), dtype=complex)
    pos = 0
    for j in range(cols):
        if j == 0 or (n_v % 2 == 0 and j == n_v // 2):
            fh[0, j] = x[pos]
            pos += 1
            if n_u % 2 == 0:
                fh[n_u // 2, j] = x[pos]
                pos += 1
                nfree = n_u // 2 - 1
            else:
                nfree = (n_u - 1) // 2
            re = x[pos : pos + nfree]
            pos += nfree
            im = x[pos : pos + nfree]
            pos += nfree
            fh[1 : 1 + nfree, j] = re + 1j * im
            fh[-1 : -1 - nfree : -1, j] = re - 1j * im
        else:
            fh[:, j] = x[pos : pos + n_u] + 1j * x[pos + n_u : pos + 2 * n_u]
            pos += 2 * n_u
    assert pos == n_u * n_v
    return np.fft.irfft2(fh, s=(n_u, n_v))
