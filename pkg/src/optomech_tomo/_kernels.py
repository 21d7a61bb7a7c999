"""Compiled inner loop of the Chebyshev propagator."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True, fastmath=True)
def chebyshev_propagate(hc, grid, shift, kappa, coef, a_init, b_init):
    """Accumulate ``sum_k coef[k] T_k(H) psi`` for the structured Hamiltonian.

    ``H`` is already shifted and scaled into [-1, 1]:

    * cavity block ``hc`` (n_d x n_d, complex),
    * continuum energies ``grid[j] + shift[l]``,
    * uniform hopping ``kappa`` between cavity level ``l`` and every
      continuum mode of sector ``l``.
    """
    n_d, modes = b_init.shape
    n_terms = coef.shape[0]

    a_prev = a_init.copy()
    b_prev = b_init.copy()
    a_cur = hc @ a_prev
    b_cur = np.empty_like(b_prev)
    for l in range(n_d):
        acc = 0j
        e0 = shift[l]
        al = a_prev[l]
        for j in range(modes):
            b = b_prev[l, j]
            acc += b
            b_cur[l, j] = (grid[j] + e0) * b + kappa * al
        a_cur[l] += kappa * acc

    res_a = coef[0] * a_prev + coef[1] * a_cur
    res_b = coef[0] * b_prev + coef[1] * b_cur

    for k in range(2, n_terms):
        c = coef[k]
        a_next = 2.0 * (hc @ a_cur) - a_prev
        for l in range(n_d):
            acc = 0j
            e0 = shift[l]
            al = a_cur[l]
            for j in range(modes):
                b = b_cur[l, j]
                acc += b
                nb = 2.0 * ((grid[j] + e0) * b + kappa * al) - b_prev[l, j]
                b_prev[l, j] = nb
                res_b[l, j] += c * nb
            a_next[l] += 2.0 * kappa * acc
        res_a += c * a_next
        a_prev = a_cur
        a_cur = a_next
        b_prev, b_cur = b_cur, b_prev
    return res_a, res_b
