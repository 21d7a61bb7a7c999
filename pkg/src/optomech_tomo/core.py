"""Special functions, mechanical state constructors and fidelity measures.

Everything here is pure and works in the bare phonon Fock basis.  The
Franck-Condon helpers implement the displacement-operator matrix elements
``<m|D(beta)|n>`` through generalized Laguerre polynomials.
"""

import math

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "laguerre",
    "laguerre_table",
    "franck_condon",
    "franck_condon_matrix",
    "displaced_overlap_pair",
    "thermal_distribution",
    "maximally_mixed",
    "fock_density",
    "superposed_fock_density",
    "fidelity_distribution",
    "fidelity_density",
    "LOG_SPACE_THRESHOLD",
]

# m + n above which the factorial prefactor is evaluated through lgamma
LOG_SPACE_THRESHOLD = 40
EIG_FLOOR = 1e-12


def laguerre(n, a, x):
    """Generalized Laguerre polynomial ``L_n^a(x)``.

    Uses the upward three-term recurrence

        (k+1) L_{k+1} = (2k + 1 + a - x) L_k - (k + a) L_{k-1}

    which is stable for ``x >= 0`` and non-negative ``a``.  ``x`` may be an
    array; the result then has the same shape.
    """
    if n < 0 or a < 0:
        raise InvalidInputError(f"laguerre needs n >= 0 and a >= 0, got n={n}, a={a}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + a - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + a - x) * cur - (k + a) * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def laguerre_table(n_max, a, x):
    """Return ``[L_0^a(x), ..., L_{n_max}^a(x)]`` from a single recurrence pass."""
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + a - x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1 + a - x) * out[k] - (k + a) * out[k - 1]) / (k + 1)
    return out


def _prefactor(lo, hi, beta):
    """sqrt(lo!/hi!) * exp(-beta^2/2) * |beta|^(hi-lo), without overflow."""
    diff = hi - lo
    if beta == 0.0:
        return 1.0 if diff == 0 else 0.0
    if lo + hi <= LOG_SPACE_THRESHOLD:
        ratio = math.factorial(lo) / math.factorial(hi)
        return math.sqrt(ratio) * math.exp(-0.5 * beta * beta) * abs(beta) ** diff
    log_p = (
        0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1))
        - 0.5 * beta * beta
        + diff * math.log(abs(beta))
    )
    return math.exp(log_p)


def franck_condon(m, n, beta):
    """Displacement-operator matrix element ``<m| exp(beta (b^dag - b)) |n>``.

    For real ``beta`` this is

        sqrt(min!/max!) e^{-beta^2/2} (s beta)^{|m-n|} L_{min}^{|m-n|}(beta^2)

    with ``s = +1`` when ``m > n`` and ``s = -1`` otherwise.
    """
    if m < 0 or n < 0:
        raise InvalidInputError(f"Fock indices must be non-negative, got ({m}, {n})")
    beta = float(beta)
    lo, hi = min(m, n), max(m, n)
    diff = hi - lo
    sign = 1.0 if m > n else -1.0
    # sign of (s*beta)^diff, magnitude handled by _prefactor
    phase = 1.0 if diff % 2 == 0 else math.copysign(1.0, sign * beta)
    value = phase * _prefactor(lo, hi, beta) * laguerre(lo, diff, beta * beta)
    if not math.isfinite(value):
        raise ArithmeticError(f"non-finite Franck-Condon factor for m={m}, n={n}, beta={beta}")
    return value


def franck_condon_matrix(size, beta):
    """``F[m, n] = franck_condon(m, n, beta)`` for ``0 <= m, n < size``.

    Filled diagonal by diagonal so each Laguerre sequence is generated once.
    """
    beta = float(beta)
    x = beta * beta
    out = np.zeros((size, size))
    for diff in range(size):
        lags = laguerre_table(size - 1 - diff, diff, x)
        for lo in range(size - diff):
            hi = lo + diff
            pre = _prefactor(lo, hi, beta)
            base = pre * lags[lo]
            if diff == 0:
                out[lo, lo] = base
                continue
            odd = diff % 2 == 1
            # m > n branch: (+beta)^diff; m < n branch: (-beta)^diff
            up = base * (math.copysign(1.0, beta) if odd else 1.0)
            down = base * (math.copysign(1.0, -beta) if odd else 1.0)
            out[hi, lo] = up
            out[lo, hi] = down
    return out


def displaced_overlap_pair(l, n, n0, beta0):
    """Overlaps ``(<l|n~>, <n~|n0>)`` with ``|n~> = D(beta0)|n>``."""
    return franck_condon(l, n, beta0), franck_condon(n, n0, -beta0)


def thermal_distribution(nbar, size):
    """Thermal phonon populations ``nbar^n / (nbar+1)^(n+1)`` for ``n < size``.

    The truncated vector is deliberately *not* renormalized.
    """
    if nbar < 0:
        raise InvalidInputError(f"thermal occupation must be >= 0, got {nbar}")
    if size < 1:
        raise InvalidInputError(f"size must be positive, got {size}")
    n = np.arange(size)
    if nbar == 0:
        out = np.zeros(size)
        out[0] = 1.0
        return out
    return np.exp(n * math.log(nbar) - (n + 1) * math.log(nbar + 1.0))


def maximally_mixed(n_s, size):
    """Uniform populations ``1/n_s`` on the lowest ``n_s`` Fock states."""
    if n_s < 1 or size < n_s:
        raise InvalidInputError(f"need 1 <= n_s <= size, got n_s={n_s}, size={size}")
    out = np.zeros(size)
    out[:n_s] = 1.0 / n_s
    return out


def fock_density(n, size):
    """Density matrix of the Fock state ``|n>`` in a ``size``-dimensional space."""
    if not 0 <= n < size:
        raise InvalidInputError(f"Fock index {n} outside dimension {size}")
    rho = np.zeros((size, size), dtype=complex)
    rho[n, n] = 1.0
    return rho


def superposed_fock_density(coefficients):
    """Normalized pure state ``|psi><psi|`` from Fock-basis amplitudes."""
    psi = np.asarray(coefficients, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if psi.size == 0 or norm == 0.0:
        raise InvalidInputError("superposition coefficients must not all vanish")
    psi = psi / norm
    return np.outer(psi, psi.conj())


def fidelity_distribution(p, q):
    """Classical fidelity ``(sum_n sqrt(p_n q_n))^2``.

    Negative entries (truncation artefacts of reconstructions) are clipped to
    zero first.  Unnormalized inputs can give values slightly above one.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError(f"length mismatch: {p.shape} vs {q.shape}")
    bc = np.sum(np.sqrt(np.clip(p, 0.0, None) * np.clip(q, 0.0, None)))
    return float(bc * bc)


def _psd_sqrt(rho):
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity_density(rho, sigma):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    ``rho`` is the reference state.  ``sigma`` (typically a reconstruction)
    is replaced by its Hermitian part; negative eigenvalues of the product
    are clipped, so a pure ``rho = |psi><psi|`` yields ``<psi|sigma|psi>``.
    Eigenvalues below ``EIG_FLOOR`` times the largest are treated as rounding
    noise, whose square roots would otherwise bias the result by ~1e-8.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    for name, mat in (("rho", rho), ("sigma", sigma)):
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidInputError(f"{name} must be square, got shape {mat.shape}")
    if rho.shape != sigma.shape:
        raise InvalidInputError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    rho = 0.5 * (rho + rho.conj().T)
    sigma = 0.5 * (sigma + sigma.conj().T)
    root = _psd_sqrt(rho)
    inner = root @ sigma @ root
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    top = max(float(w.max()), 0.0)
    w = np.where(w > EIG_FLOOR * top, w, 0.0)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
