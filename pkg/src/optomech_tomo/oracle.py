"""Brute-force time evolution with a discretized output continuum.

The continuum integral is replaced by ``modes`` equally spaced modes on
``[-W, W)`` with flat coupling ``xi_c sqrt(dk)``.  The mechanical mode is
kept in the *bare* Fock basis, so nothing here relies on displaced states or
Franck-Condon factors; the closed-form spectra can therefore be checked
against it.

Basis ordering of the single-photon subspace: first the ``n_d`` states
``|1>_a |l>_b |vac>``, then ``|0>_a |l>_b |1_j>`` in row-major ``(l, j)``
order.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.special import jv

from ._kernels import chebyshev_propagate
from .errors import IntegratorError, InvalidInputError, ResourceError
from .spectra import LorentzianPacket, Spectrum, state_as_density

__all__ = [
    "ContinuumDiscretization",
    "SinglePhotonHamiltonian",
    "InitialCondition",
    "WavefunctionState",
    "OracleEngine",
    "build_hamiltonian",
    "evolve",
    "oracle_spectrum",
    "DEFAULT_TOL",
    "DEFAULT_MAX_DIM",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_DIM = 4_000_000
DEFAULT_WINDOW = 60.0
DEFAULT_T_FINAL_DECAYS = 15.0
DEFAULT_N_SIDEBAND = 8


@dataclass(frozen=True)
class ContinuumDiscretization:
    """Uniform grid ``-W + j dk`` (``j < modes``) with ``dk = 2W / modes``."""

    window: float
    modes: int

    def __post_init__(self):
        if not math.isfinite(self.window) or self.window <= 0:
            raise InvalidInputError(f"window half-width must be > 0, got {self.window}")
        if int(self.modes) != self.modes or self.modes < 2:
            raise InvalidInputError(f"need at least two continuum modes, got {self.modes}")

    @classmethod
    def with_spacing(cls, window, spacing):
        """Grid of half-width ``window`` whose spacing is ``spacing`` (rounded to fit)."""
        modes = int(round(2.0 * window / spacing))
        return cls(float(window), modes)

    @property
    def spacing(self):
        return 2.0 * self.window / self.modes

    @property
    def revival_time(self):
        return 2.0 * math.pi / self.spacing

    def detunings(self):
        return -self.window + self.spacing * np.arange(self.modes)

    def validate(self, params, n_sideband=DEFAULT_N_SIDEBAND):
        """Check the grid resolves the linewidth and covers the sidebands."""
        dk = self.spacing
        if dk > params.gamma_c / 10.0 * (1 + 1e-12):
            raise InvalidInputError(
                f"continuum spacing dk={dk:.4g} exceeds gamma_c/10={params.gamma_c / 10:.4g}; "
                f"increase modes (currently {self.modes})"
            )
        need = params.delta + n_sideband * params.omega_m + 10.0 * params.gamma_c
        if self.window < need:
            raise InvalidInputError(
                f"window W={self.window:.4g} does not cover delta + {n_sideband} sidebands "
                f"+ 10 gamma_c = {need:.4g}"
            )


@dataclass
class InitialCondition:
    """Photon starts in the cavity (``emission``) or as an incident packet."""

    variant: str
    n0: int
    packet: LorentzianPacket = None

    def __post_init__(self):
        if self.variant not in ("emission", "scattering"):
            raise InvalidInputError(f"unknown photon variant {self.variant!r}")
        if self.n0 < 0:
            raise InvalidInputError(f"mechanical Fock index must be >= 0, got {self.n0}")
        if self.variant == "scattering" and self.packet is None:
            raise InvalidInputError("scattering needs a LorentzianPacket")


@dataclass
class WavefunctionState:
    """Cavity amplitudes ``A[l]`` and continuum amplitudes ``B[l, j]`` at time ``t``."""

    A: np.ndarray
    B: np.ndarray
    t: float
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    terms: int = 0

    @property
    def cavity_population(self):
        return float(np.sum(np.abs(self.A) ** 2))

    @property
    def norm(self):
        return float(np.sum(np.abs(self.A) ** 2) + np.sum(np.abs(self.B) ** 2))


class SinglePhotonHamiltonian:
    """Structured single-photon Hamiltonian over cavity and discretized continuum."""

    def __init__(self, params, disc, n_d):
        self.params = params
        self.disc = disc
        self.n_d = int(n_d)
        l = np.arange(self.n_d)
        wm = params.omega_m
        block = np.diag(wm * l.astype(float))
        hop = -params.g0 * np.sqrt(l[1:].astype(float))
        block += np.diag(hop, 1) + np.diag(hop, -1)
        self.cavity_block = block
        self.grid = disc.detunings()
        self.sector_shift = wm * l.astype(float)
        self.kappa = params.xi_c * math.sqrt(disc.spacing)

    @property
    def dimension(self):
        return self.n_d * (self.disc.modes + 1)

    def energies(self):
        """Continuum energies ``E[l, j] = dk_j + l omega_m``."""
        return self.grid[None, :] + self.sector_shift[:, None]

    def apply(self, a, b):
        ha = self.cavity_block @ a + self.kappa * b.sum(axis=1)
        hb = self.energies() * b + self.kappa * a[:, None]
        return ha, hb

    def energy(self, a, b):
        ha, hb = self.apply(a, b)
        return float(np.real(np.vdot(a, ha) + np.vdot(b, hb)))

    def spectral_bounds(self):
        ev = np.linalg.eigvalsh(self.cavity_block)
        e = self.energies()
        # Weyl: the hopping has operator norm kappa sqrt(modes)
        pad = self.kappa * math.sqrt(self.disc.modes) + 1e-6
        return min(ev.min(), e.min()) - pad, max(ev.max(), e.max()) + pad

    def to_sparse(self):
        """Explicit sparse matrix in the documented basis ordering."""
        n_d, modes = self.n_d, self.disc.modes
        cav = sp.csr_matrix(self.cavity_block)
        cont = sp.diags(self.energies().ravel())
        rows = np.repeat(np.arange(n_d), modes)
        cols = np.arange(n_d * modes)
        hop = sp.csr_matrix((np.full(n_d * modes, self.kappa), (rows, cols)),
                            shape=(n_d, n_d * modes))
        return sp.bmat([[cav, hop], [hop.T, cont]], format="csr")

    def pack(self, a, b):
        return np.concatenate([a, b.ravel()])

    def unpack(self, vec):
        return vec[:self.n_d], vec[self.n_d:].reshape(self.n_d, self.disc.modes)


def build_hamiltonian(params, disc, n_d, max_dim=DEFAULT_MAX_DIM, n_sideband=DEFAULT_N_SIDEBAND):
    """Validate the discretization and assemble the single-photon Hamiltonian."""
    if int(n_d) != n_d or n_d < 1:
        raise InvalidInputError(f"phonon truncation n_d must be a positive integer, got {n_d}")
    disc.validate(params, n_sideband)
    dim = int(n_d) * (disc.modes + 1)
    if dim > max_dim:
        raise ResourceError(f"single-photon subspace dimension {dim} exceeds cap {max_dim}")
    return SinglePhotonHamiltonian(params, disc, n_d)


def initial_amplitudes(h, init):
    """Amplitudes ``(A, B)`` at t = 0 for an initial condition."""
    a = np.zeros(h.n_d, dtype=complex)
    b = np.zeros((h.n_d, h.disc.modes), dtype=complex)
    if init.n0 >= h.n_d:
        raise InvalidInputError(f"n0={init.n0} outside phonon truncation n_d={h.n_d}")
    if init.variant == "emission":
        a[init.n0] = 1.0
        return a, b
    pk = init.packet
    w = h.disc.window
    if abs(pk.center) + 5.0 * pk.width > w:
        raise InvalidInputError(
            f"packet (center {pk.center}, width {pk.width}) is not contained in window W={w}"
        )
    dk = h.disc.spacing
    if dk > pk.width / 10.0 * (1 + 1e-12):
        raise InvalidInputError(
            f"continuum spacing dk={dk:.4g} does not resolve the packet width {pk.width} "
            f"(need dk <= width/10)"
        )
    amp = math.sqrt(pk.width / math.pi) * math.sqrt(dk) / (h.grid - pk.center + 1j * pk.width)
    b[init.n0] = amp / np.linalg.norm(amp)
    return a, b


def _chebyshev_coefficients(x, tol):
    k_max = int(x + 40.0 * max(x, 1.0) ** (1.0 / 3.0) + 60)
    k = np.arange(k_max)
    bess = jv(k, x)
    keep = np.nonzero(np.abs(bess) > 1e-3 * tol)[0]
    n_terms = max(int(keep[-1]) + 2, 2) if keep.size else 2
    coef = (-1j) ** k[:n_terms] * bess[:n_terms]
    coef[1:] *= 2.0
    return coef


def evolve(h, init, t_final, tol=DEFAULT_TOL, long_time=True):
    """Propagate an initial condition to ``t_final`` with a Chebyshev expansion.

    With ``long_time`` (the default) the call requires ``t_final >= 10/gamma_c``
    and verifies that the photon has left the cavity.  In every case
    ``t_final`` must stay below the revival time ``2 pi / dk`` of the
    discretized continuum.
    """
    gc = h.params.gamma_c
    if t_final < 0:
        raise InvalidInputError(f"t_final must be >= 0, got {t_final}")
    if long_time and t_final < 10.0 / gc * (1 - 1e-12):
        raise InvalidInputError(f"t_final={t_final} shorter than the long-time limit 10/gamma_c")
    if t_final >= h.disc.revival_time:
        raise InvalidInputError(
            f"t_final={t_final} reaches the continuum revival time {h.disc.revival_time:.4g}"
        )
    a0, b0 = initial_amplitudes(h, init)
    norm0 = float(np.sum(np.abs(a0) ** 2) + np.sum(np.abs(b0) ** 2))
    e0 = h.energy(a0, b0)

    lo, hi = h.spectral_bounds()
    center, radius = 0.5 * (hi + lo), 0.5 * (hi - lo)
    coef = _chebyshev_coefficients(radius * t_final, tol)
    hc = ((h.cavity_block - center * np.eye(h.n_d)) / radius).astype(complex)
    a, b = chebyshev_propagate(
        hc, h.grid / radius, (h.sector_shift - center) / radius, h.kappa / radius,
        coef, a0, b0,
    )
    phase = np.exp(-1j * center * t_final)
    a *= phase
    b *= phase

    state = WavefunctionState(a, b, float(t_final), terms=coef.size)
    state.norm_drift = abs(state.norm - norm0)
    state.energy_drift = abs(h.energy(a, b) - e0)
    if state.norm_drift > 10.0 * tol:
        raise IntegratorError(f"norm drift {state.norm_drift:.3e} exceeds 10*tol={10 * tol:.1e}")
    if long_time and state.cavity_population > math.exp(-0.5 * gc * t_final) + tol:
        raise IntegratorError(
            f"cavity population {state.cavity_population:.3e} has not decayed by t={t_final}"
        )
    log.debug("evolved %s n0=%d: %d terms, norm drift %.2e", init.variant, init.n0,
              coef.size, state.norm_drift)
    return state


@dataclass
class OracleEngine:
    """Caches long-time continuum amplitudes per initial Fock state.

    Parameters
    ----------
    params : SystemParams
    disc : ContinuumDiscretization
    n_d : int
        Bare phonon truncation of the cavity block.
    variant : {"emission", "scattering"}
    packet : LorentzianPacket, optional
        Required for scattering.
    t_final : float, optional
        Defaults to ``15 / gamma_c``, or ``15 / min(gamma_c, width)`` for a
        scattering packet so that a long incident pulse has time to pass.
    """

    params: object
    disc: ContinuumDiscretization
    n_d: int = 40
    variant: str = "emission"
    packet: LorentzianPacket = None
    t_final: float = None
    tol: float = DEFAULT_TOL
    max_dim: int = DEFAULT_MAX_DIM
    n_sideband: int = DEFAULT_N_SIDEBAND
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _diag: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.t_final is None:
            rate = self.params.gamma_c
            if self.variant == "scattering" and self.packet is not None:
                rate = min(rate, self.packet.width)
            self.t_final = DEFAULT_T_FINAL_DECAYS / rate
        InitialCondition(self.variant, 0, self.packet)
        self.hamiltonian = build_hamiltonian(self.params, self.disc, self.n_d,
                                             self.max_dim, self.n_sideband)

    @property
    def grid(self):
        return self.hamiltonian.grid

    def amplitudes(self, n0):
        """Continuum amplitudes ``B[l, j]`` at ``t_final`` for initial ``|n0>``."""
        with self._lock:
            hit = self._cache.get(n0)
        if hit is not None:
            return hit
        init = InitialCondition(self.variant, int(n0), self.packet)
        state = evolve(self.hamiltonian, init, self.t_final, self.tol)
        with self._lock:
            self._cache.setdefault(n0, state.B)
            self._diag[n0] = {"norm_drift": state.norm_drift,
                              "energy_drift": state.energy_drift,
                              "cavity_population": state.cavity_population,
                              "terms": state.terms}
            return self._cache[n0]

    def prefetch(self, indices, workers=1):
        """Evolve several initial Fock states, optionally on a thread pool."""
        todo = [n for n in indices if n not in self._cache]
        if workers <= 1 or len(todo) <= 1:
            for n in todo:
                self.amplitudes(n)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(self.amplitudes, todo))

    def lambda_grid(self, n, m):
        """``Lambda_{n,m}`` on the continuum grid, as a density per unit detuning."""
        bn = self.amplitudes(n)
        dk = self.disc.spacing
        if n == m:
            return np.sum(bn.real ** 2 + bn.imag ** 2, axis=0) / dk + 0j
        bm = self.amplitudes(m)
        return np.sum(np.conj(bn) * bm, axis=0) / dk

    def spectrum(self, state):
        """Spectrum of a population vector or density matrix on the grid."""
        arr = np.asarray(state)
        dim = arr.shape[0]
        if dim > self.n_d:
            raise InvalidInputError(f"state dimension {dim} exceeds oracle truncation {self.n_d}")
        total = np.zeros(self.disc.modes)
        if arr.ndim == 1:
            for n, p in enumerate(np.asarray(arr, dtype=float)):
                if p != 0.0:
                    total += p * self.lambda_grid(n, n).real
        else:
            rho = state_as_density(arr)
            for m in range(dim):
                for n in range(dim):
                    if rho[m, n] != 0:
                        total += (rho[m, n] * self.lambda_grid(n, m)).real
        return Spectrum(self.grid.copy(), total, self.provenance(kind="diagonal" if arr.ndim == 1
                                                                 else "density"))

    def _interpolate(self, values, points):
        points = np.atleast_1d(np.asarray(points, dtype=float))
        grid = self.grid
        if points.min() < grid[0] or points.max() > grid[-1]:
            raise InvalidInputError("requested detunings fall outside the oracle window")
        return CubicSpline(grid, values)(points)

    def lambda_at(self, points, size):
        """``Lambda[p, n, m]`` for ``n, m < size`` at arbitrary detunings."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        out = np.empty((points.size, size, size), dtype=complex)
        for n in range(size):
            for m in range(n, size):
                lam = self.lambda_grid(n, m)
                val = self._interpolate(lam.real, points)
                if n == m:
                    out[:, n, n] = val
                    continue
                val = val + 1j * self._interpolate(lam.imag, points)
                out[:, n, m] = val
                out[:, m, n] = np.conj(val)
        return out

    def as_kernel(self):
        """Reconstruction kernel ``(points, size) -> Lambda[p, n, m]`` backed by this engine."""

        def kernel(points, size):
            return self.lambda_at(points, size)

        kernel.description = self.provenance()
        return kernel

    def spectrum_at(self, state, points):
        """Spectrum of ``state`` interpolated to arbitrary detunings."""
        spec = self.spectrum(state)
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        return Spectrum(pts, self._interpolate(spec.values, pts), spec.provenance)

    def provenance(self, **extra):
        info = {
            "engine": "oracle",
            "variant": self.variant,
            "params": self.params.as_dict(),
            "window": self.disc.window,
            "modes": self.disc.modes,
            "n_d": self.n_d,
            "t_final": self.t_final,
            "tol": self.tol,
        }
        if self.packet is not None:
            info["packet"] = {"center": self.packet.center, "width": self.packet.width}
        info.update(extra)
        return info

    def report(self):
        """Machine-readable discretization diagnostics."""
        drifts = [d["norm_drift"] for d in self._diag.values()]
        return {
            "spacing": self.disc.spacing,
            "revival_time": self.disc.revival_time,
            "revival_margin": self.disc.revival_time - self.t_final,
            "max_norm_drift": max(drifts) if drifts else None,
            "evolutions": {int(k): v for k, v in sorted(self._diag.items())},
            **self.provenance(),
        }


def oracle_spectrum(params, disc, state, variant="emission", t_final=None, n_d=40,
                    packet=None, tol=DEFAULT_TOL, engine=None):
    """Spectrum of a mechanical state by direct time evolution, on the grid of ``disc``.

    Each needed initial Fock component is evolved once; mixed states are then
    assembled linearly.  Pass ``engine`` to reuse cached evolutions.
    """
    if engine is None:
        engine = OracleEngine(params, disc, n_d=n_d, variant=variant, packet=packet,
                              t_final=t_final, tol=tol)
    return engine.spectrum(state)
