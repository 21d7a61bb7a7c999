"""Closed-form single-photon emission amplitudes and spectra.

The long-time amplitude for a photon initially in the cavity, with the mirror
in Fock state ``|n0>`` and ending in phonon state ``|l>``, is a sum over the
photon-displaced eigenstates ``|n~>``::

    B_{n0,l}(dk) = sqrt(gc/2pi) sum_n <l|n~><n~|n0> / (dk + delta - (n-l) wM + i gc/2)

with the time-dependent global phase dropped.  Spectra of arbitrary
mechanical states follow from the kernel
``Lambda_{n,m}(dk) = sum_l conj(B_{n,l}) B_{m,l}``.

All frequencies (``g0``, ``gamma_c``, ``omega_m`` and detunings) must be given
in one common unit; spectra come back in the inverse of that unit.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import franck_condon_matrix
from .errors import ConsistencyError, InvalidInputError

__all__ = [
    "SystemParams",
    "Spectrum",
    "LorentzianPacket",
    "emission_amplitude",
    "emission_amplitudes",
    "lambda_element",
    "lambda_matrix",
    "spectrum_fock",
    "spectrum_emission",
    "state_as_density",
]

_CHUNK = 256
IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True)
class SystemParams:
    """Optomechanical constants.

    Parameters
    ----------
    g0 : float
        Single-photon optomechanical coupling.
    gamma_c : float
        Cavity photon decay rate.
    omega_m : float
        Mechanical frequency.  Defaults to 1, i.e. everything in units of
        the mechanical frequency.
    """

    g0: float
    gamma_c: float
    omega_m: float = 1.0

    def __post_init__(self):
        for name in ("g0", "gamma_c", "omega_m"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value}")
        if self.g0 < 0:
            raise InvalidInputError(f"g0 must be >= 0, got {self.g0}")
        if self.gamma_c <= 0:
            raise InvalidInputError(f"gamma_c must be > 0, got {self.gamma_c}")
        if self.omega_m <= 0:
            raise InvalidInputError(f"omega_m must be > 0, got {self.omega_m}")

    @classmethod
    def from_ratios(cls, g0_over_wm, gamma_c_over_wm):
        """Dimensionless parametrization with ``omega_m = 1``."""
        return cls(g0=float(g0_over_wm), gamma_c=float(gamma_c_over_wm), omega_m=1.0)

    @property
    def beta0(self):
        return self.g0 / self.omega_m

    @property
    def delta(self):
        return self.g0 * self.g0 / self.omega_m

    @property
    def xi_c(self):
        """Flat cavity-continuum coupling, ``gamma_c = 2 pi xi_c^2``."""
        return math.sqrt(self.gamma_c / (2.0 * math.pi))

    def scaled(self):
        """The same system expressed in units of ``omega_m``."""
        w = self.omega_m
        return SystemParams(self.g0 / w, self.gamma_c / w, 1.0)

    def as_dict(self):
        return {"g0": self.g0, "gamma_c": self.gamma_c, "omega_m": self.omega_m}


@dataclass
class Spectrum:
    """Spectral density sampled at a list of detunings."""

    detunings: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.detunings.shape != self.values.shape:
            raise InvalidInputError("detunings and values must have equal length")

    def __len__(self):
        return self.values.size

    def sorted(self):
        order = np.argsort(self.detunings, kind="stable")
        return Spectrum(self.detunings[order], self.values[order], dict(self.provenance))


@dataclass(frozen=True)
class LorentzianPacket:
    """Incident single-photon wave packet ``sqrt(eps/pi) / (dk - center + i eps)``."""

    center: float
    width: float

    def __post_init__(self):
        if not (math.isfinite(self.center) and math.isfinite(self.width)) or self.width <= 0:
            raise InvalidInputError(f"packet width must be finite and > 0, got {self.width}")


@functools.lru_cache(maxsize=32)
def _fc_pair(n_d, beta0):
    # <l|n~> = F[l, n, beta0];  <n~|n0> = F[n, n0, -beta0]
    up = franck_condon_matrix(n_d, beta0)
    down = franck_condon_matrix(n_d, -beta0)
    up.flags.writeable = False
    down.flags.writeable = False
    return up, down


def _check_nd(n_d):
    if int(n_d) != n_d or n_d < 1:
        raise InvalidInputError(f"summation dimension n_d must be a positive integer, got {n_d}")
    return int(n_d)


def emission_amplitudes(detunings, params, n_d):
    """Truncated emission amplitudes for every ``(l, n0)`` pair.

    Returns
    -------
    ndarray, shape (len(detunings), n_d, n_d)
        ``out[p, l, n0] = B^{n_d}_{n0, l}(detunings[p])``.
    """
    n_d = _check_nd(n_d)
    dk = np.atleast_1d(np.asarray(detunings, dtype=float))
    overlap_l, overlap_n0 = _fc_pair(n_d, params.beta0)
    idx = np.arange(n_d)
    # (n - l) omega_m, indexed [l, n]
    shift = (idx[None, :] - idx[:, None]) * params.omega_m
    pref = params.xi_c
    out = np.empty((dk.size, n_d, n_d), dtype=complex)
    for start in range(0, dk.size, _CHUNK):
        chunk = dk[start:start + _CHUNK]
        den = chunk[:, None, None] + params.delta - shift[None] + 0.5j * params.gamma_c
        out[start:start + _CHUNK] = pref * np.matmul(overlap_l[None] / den, overlap_n0)
    return out


def emission_amplitude(n0, l, detuning, params, n_d):
    """Single amplitude ``B^{n_d}_{n0,l}`` at one detuning."""
    n_d = _check_nd(n_d)
    if n0 < 0 or l < 0:
        raise InvalidInputError(f"Fock indices must be non-negative, got n0={n0}, l={l}")
    overlap_l, overlap_n0 = _fc_pair(n_d, params.beta0)
    n = np.arange(n_d)
    lrow = overlap_l[l] if l < n_d else np.zeros(n_d)
    ncol = overlap_n0[:, n0] if n0 < n_d else np.zeros(n_d)
    den = detuning + params.delta - (n - l) * params.omega_m + 0.5j * params.gamma_c
    return complex(params.xi_c * np.sum(lrow * ncol / den))


def lambda_matrix(detunings, params, n_d, size=None, l_max=None):
    """Kernel ``Lambda[p, n, m] = sum_{l < l_max} conj(B_{n,l}) B_{m,l}``.

    ``size`` restricts the mechanical indices to ``n, m < size`` (defaults to
    ``n_d``); ``l_max`` defaults to ``n_d``.
    """
    n_d = _check_nd(n_d)
    size = n_d if size is None else int(size)
    l_max = n_d if l_max is None else int(l_max)
    if not 1 <= size <= n_d or not 1 <= l_max <= n_d:
        raise InvalidInputError(f"need 1 <= size, l_max <= n_d={n_d}")
    dk = np.atleast_1d(np.asarray(detunings, dtype=float))
    out = np.empty((dk.size, size, size), dtype=complex)
    for start in range(0, dk.size, _CHUNK):
        amps = emission_amplitudes(dk[start:start + _CHUNK], params, n_d)[:, :l_max, :size]
        out[start:start + _CHUNK] = np.matmul(np.conj(np.swapaxes(amps, 1, 2)), amps)
    # enforce Lambda_{m,n} = conj(Lambda_{n,m}) and a real diagonal bit for bit
    lower = np.tril_indices(size, -1)
    out[:, lower[0], lower[1]] = np.conj(out[:, lower[1], lower[0]])
    idx = np.arange(size)
    out[:, idx, idx] = out[:, idx, idx].real
    return out


def lambda_element(n, m, detuning, params, n_d, l_max=None):
    """``Lambda_{n,m}(detuning)``; conjugate-symmetric in ``(n, m)``."""
    n_d = _check_nd(n_d)
    if n < 0 or m < 0:
        raise InvalidInputError(f"Fock indices must be non-negative, got ({n}, {m})")
    if n >= n_d or m >= n_d:
        return 0j
    l_max = n_d if l_max is None else int(l_max)
    amps = emission_amplitudes([detuning], params, n_d)[0, :l_max]
    if n == m:
        return complex(np.sum(amps[:, n].real ** 2 + amps[:, n].imag ** 2), 0.0)
    return complex(np.sum(np.conj(amps[:, n]) * amps[:, m]))


def spectrum_fock(n, detunings, params, n_d):
    """Emission spectrum ``S_{|n>} = Lambda_{n,n}`` for the Fock state ``|n>``."""
    if n < 0:
        raise InvalidInputError(f"Fock index must be non-negative, got {n}")
    dk = np.atleast_1d(np.asarray(detunings, dtype=float))
    if dk.size == 0:
        raise InvalidInputError("detuning grid is empty")
    n_d = _check_nd(n_d)
    values = np.zeros(dk.size)
    if n < n_d:
        for start in range(0, dk.size, _CHUNK):
            amps = emission_amplitudes(dk[start:start + _CHUNK], params, n_d)[:, :, n]
            values[start:start + _CHUNK] = np.sum(amps.real ** 2 + amps.imag ** 2, axis=1)
    return Spectrum(dk, values, {"engine": "analytic", "kind": "fock", "n": int(n), "n_d": n_d,
                                 "params": params.as_dict()})


def state_as_density(state, size=None):
    """Promote a population vector or density matrix to a square complex matrix."""
    arr = np.asarray(state)
    if arr.ndim == 1:
        rho = np.diag(arr.astype(complex))
    elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        rho = arr.astype(complex)
    else:
        raise InvalidInputError(f"state must be a vector or square matrix, got shape {arr.shape}")
    if size is not None and rho.shape[0] < size:
        padded = np.zeros((size, size), dtype=complex)
        padded[:rho.shape[0], :rho.shape[0]] = rho
        rho = padded
    return rho


def spectrum_emission(state, detunings, params, n_d):
    """Emission spectrum ``S = sum_{m,n} rho_{m,n} Lambda_{n,m}`` of a mechanical state.

    ``state`` is either a population vector (diagonal state) or a density
    matrix, of dimension at most ``n_d``.
    """
    n_d = _check_nd(n_d)
    arr = np.asarray(state)
    dk = np.atleast_1d(np.asarray(detunings, dtype=float))
    if dk.size == 0:
        raise InvalidInputError("detuning grid is empty")
    dim = arr.shape[0]
    if dim > n_d:
        raise InvalidInputError(f"state dimension {dim} exceeds summation dimension n_d={n_d}")
    values = np.empty(dk.size)
    if arr.ndim == 1:
        pops = np.asarray(arr, dtype=float)
        for start in range(0, dk.size, _CHUNK):
            amps = emission_amplitudes(dk[start:start + _CHUNK], params, n_d)[:, :, :dim]
            weights = np.sum(amps.real ** 2 + amps.imag ** 2, axis=1)
            values[start:start + _CHUNK] = weights @ pops
        kind = "diagonal"
    else:
        rho = state_as_density(arr)
        for start in range(0, dk.size, _CHUNK):
            amps = emission_amplitudes(dk[start:start + _CHUNK], params, n_d)[:, :, :dim]
            # sum_{m,n} rho[m,n] conj(B[l,n]) B[l,m]
            raw = np.einsum("mn,pln,plm->p", rho, np.conj(amps), amps)
            scale = np.max(np.abs(raw)) if raw.size else 0.0
            residue = np.max(np.abs(raw.imag)) if raw.size else 0.0
            if residue > IMAG_RESIDUE_TOL * max(scale, np.finfo(float).tiny):
                raise ConsistencyError(
                    f"spectrum has imaginary residue {residue:.3e} (relative "
                    f"{residue / scale:.3e}); is the density matrix Hermitian?"
                )
            values[start:start + _CHUNK] = raw.real
        kind = "density"
    return Spectrum(dk, values, {"engine": "analytic", "kind": kind, "n_d": n_d,
                                 "params": params.as_dict()})
