"""Linear inversion of sampled spectra into phonon populations or density matrices.

Diagonal states solve ``K P = Q`` with ``K[j, n] = S_{|n>}(dk_j)``; general
states solve ``M C = R`` with ``M[j, n + N m] = Lambda_{n,m}(dk_j)`` and
``C[n + N m] = rho_{m,n}``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import fidelity_density, fidelity_distribution
from .errors import IllPosedError, InvalidInputError
from .spectra import lambda_matrix

__all__ = [
    "SamplePlan",
    "ReconstructionProblem",
    "ReconstructionResult",
    "ScanResult",
    "sideband_plan",
    "random_plan",
    "explicit_plan",
    "general_sideband_plan",
    "analytic_kernel",
    "build_diagonal_problem",
    "build_general_problem",
    "solve_diagonal",
    "solve_general",
    "solve",
    "project_to_density",
    "convergence_scan",
    "flat_index",
    "unflatten_index",
    "DEFAULT_CONDITION_CAP",
]

DEFAULT_CONDITION_CAP = 1e12
MIN_GAP = 1e-6


@dataclass
class SamplePlan:
    """Detunings at which the spectrum is read."""

    points: np.ndarray
    strategy: str = "explicit"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_1d(np.asarray(self.points, dtype=float))
        if self.points.ndim != 1 or self.points.size == 0:
            raise InvalidInputError("a sample plan needs at least one detuning")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("sample points must be finite")
        gaps = np.diff(np.sort(self.points))
        if gaps.size and gaps.min() <= 0.0:
            raise InvalidInputError("sample points must be pairwise distinct")

    def __len__(self):
        return self.points.size

    def as_dict(self):
        return {"strategy": self.strategy, "points": self.points.tolist(), **self.meta}


def sideband_plan(N, params, even="upper"):
    """``N`` points on the phonon sideband comb ``-delta + j omega_m``.

    ``j`` runs over ``N`` consecutive integers centred on zero; for odd ``N``
    this is ``-(N-1)/2 .. (N-1)/2``.  For even ``N`` one endpoint has to go:
    ``even="upper"`` keeps ``-(N/2 - 1) .. N/2`` (the default),
    ``even="lower"`` keeps ``-N/2 .. N/2 - 1``.
    """
    if int(N) != N or N < 1:
        raise InvalidInputError(f"N must be a positive integer, got {N}")
    if even not in ("upper", "lower"):
        raise InvalidInputError(f"even must be 'upper' or 'lower', got {even!r}")
    N = int(N)
    first = -((N - 1) // 2) if even == "upper" else -(N // 2)
    j = np.arange(first, first + N)
    return SamplePlan(-params.delta + j * params.omega_m, "sideband",
                      {"j_first": int(first), "N": N, "even": even})


def _significant_peaks(points, params, N, n_d, rel):
    lam = lambda_matrix(points, params, n_d, size=N)
    diag = np.real(np.einsum("pnn->pn", lam))
    return np.max(diag, axis=1) >= rel * np.max(diag)


def general_sideband_plan(N, params, n_d=48, rel=1e-3):
    """``N*N`` detunings for the density-matrix problem.

    The plain comb of ``N*N`` consecutive sideband peaks is used when every
    one of them carries spectral weight (at least ``rel`` of the strongest
    peak for some Fock state below ``N``).  Otherwise the plan is built from
    ``N`` copies of the ``N``-point comb shifted by ``k omega_m / N``.
    For ``N = 3`` at ``g0 = 2 omega_m`` this gives the nine-point comb ``-8 .. 0``.
    """
    if int(N) != N or N < 1:
        raise InvalidInputError(f"N must be a positive integer, got {N}")
    N = int(N)
    plan = sideband_plan(N * N, params)
    if np.all(_significant_peaks(plan.points, params, N, max(n_d, N), rel)):
        plan.meta["general_N"] = N
        return plan
    base = sideband_plan(N, params).points
    pts = np.concatenate([base + k * params.omega_m / N for k in range(N)])
    return SamplePlan(pts, "sideband-subharmonic", {"general_N": N})


def random_plan(N, low, high, seed):
    """``N`` uniform draws in ``[low, high)``, reproducible from ``seed``."""
    if int(N) != N or N < 1:
        raise InvalidInputError(f"N must be a positive integer, got {N}")
    if not (math.isfinite(low) and math.isfinite(high)) or not low < high:
        raise InvalidInputError(f"degenerate sampling range ({low}, {high})")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(low, high, int(N))
    # redraw near-duplicates
    for _ in range(1000):
        order = np.argsort(pts)
        close = np.nonzero(np.diff(pts[order]) < MIN_GAP)[0]
        if close.size == 0:
            break
        pts[order[close + 1]] = rng.uniform(low, high, close.size)
    else:
        raise InvalidInputError(f"cannot draw {N} distinct points in ({low}, {high})")
    return SamplePlan(pts, "random", {"low": float(low), "high": float(high), "seed": seed})


def explicit_plan(points):
    return SamplePlan(points, "explicit")


def flat_index(m, n, N):
    """Column of ``rho_{m,n}`` in the flattened unknown vector (0-based)."""
    return m * N + n


def unflatten_index(idx, N):
    """Inverse of :func:`flat_index`: ``m = floor(idx / N)``, ``n = idx - m N``."""
    m = idx // N
    return m, idx - m * N


def analytic_kernel(params, n_d):
    """Kernel callable ``(points, size) -> Lambda[p, n, m]`` from the closed form."""

    def kernel(points, size):
        return lambda_matrix(points, params, n_d, size=size)

    kernel.description = {"engine": "analytic", "n_d": int(n_d), "params": params.as_dict()}
    return kernel


@dataclass
class ReconstructionProblem:
    """Square linear system plus the information needed to rebuild it."""

    matrix: np.ndarray
    observations: np.ndarray
    N: int
    kind: str
    plan: SamplePlan
    sigma: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        rows, cols = self.matrix.shape
        if rows != cols:
            raise InvalidInputError(f"coefficient matrix must be square, got {self.matrix.shape}")
        if self.observations.shape != (rows,):
            raise InvalidInputError(
                f"observation length {self.observations.shape} does not match matrix size {rows}"
            )


@dataclass
class ReconstructionResult:
    """Solution of a reconstruction problem with its diagnostics."""

    solution: np.ndarray
    condition_number: float
    residual: float
    kind: str
    fidelity: float = None
    hermiticity_deviation: float = None
    trace: complex = None
    projected: bool = False
    metadata: dict = field(default_factory=dict)

    def as_dict(self):
        sol = np.asarray(self.solution)
        out = {
            "kind": self.kind,
            "condition_number": float(self.condition_number),
            "residual": float(self.residual),
            "fidelity": None if self.fidelity is None else float(self.fidelity),
            "projected": bool(self.projected),
            "metadata": self.metadata,
        }
        if np.iscomplexobj(sol):
            out["solution_real"] = sol.real.tolist()
            out["solution_imag"] = sol.imag.tolist()
        else:
            out["solution"] = sol.tolist()
        if self.hermiticity_deviation is not None:
            out["hermiticity_deviation"] = float(self.hermiticity_deviation)
        if self.trace is not None:
            out["trace_real"] = float(np.real(self.trace))
            out["trace_imag"] = float(np.imag(self.trace))
        return out


def _observations(values, size):
    obs = np.asarray(values)
    if obs.ndim != 1 or obs.size != size:
        raise InvalidInputError(f"expected {size} spectral values, got shape {obs.shape}")
    return obs


def build_diagonal_problem(plan, spectrum_values, params=None, n_d=None, kernel=None, sigma=None):
    """Assemble ``K P = Q`` for an ``N = len(plan)`` truncation.

    ``K`` comes from ``kernel`` (default: closed-form emission spectra with
    summation dimension ``n_d``); ``Q`` is taken verbatim.
    """
    N = len(plan)
    if kernel is None:
        if params is None or n_d is None:
            raise InvalidInputError("need params and n_d, or an explicit kernel")
        kernel = analytic_kernel(params, n_d)
    lam = kernel(plan.points, N)
    matrix = np.real(np.einsum("pnn->pn", lam)).copy()
    obs = _observations(spectrum_values, N).astype(float)
    return ReconstructionProblem(
        matrix, obs, N, "diagonal", plan,
        sigma=None if sigma is None else np.asarray(sigma, dtype=float),
        provenance={"kernel": getattr(kernel, "description", {}), "plan": plan.as_dict()},
    )


def build_general_problem(plan, spectrum_values, params=None, n_d=None, kernel=None, sigma=None):
    """Assemble ``M C = R`` for a plan of ``N*N`` points."""
    size = len(plan)
    N = math.isqrt(size)
    if N * N != size:
        raise InvalidInputError(f"general reconstruction needs N^2 sample points, got {size}")
    if kernel is None:
        if params is None or n_d is None:
            raise InvalidInputError("need params and n_d, or an explicit kernel")
        kernel = analytic_kernel(params, n_d)
    lam = kernel(plan.points, N)
    matrix = np.empty((size, size), dtype=complex)
    for col in range(size):
        m, n = unflatten_index(col, N)
        matrix[:, col] = lam[:, n, m]
    obs = _observations(spectrum_values, size).astype(complex)
    return ReconstructionProblem(
        matrix, obs, N, "general", plan,
        sigma=None if sigma is None else np.asarray(sigma, dtype=float),
        provenance={"kernel": getattr(kernel, "description", {}), "plan": plan.as_dict()},
    )


def _linear_solve(problem, condition_cap):
    a = problem.matrix
    b = problem.observations
    if problem.sigma is not None:
        if problem.sigma.shape != b.shape or np.any(problem.sigma <= 0):
            raise InvalidInputError("per-point standard deviations must be positive")
        w = 1.0 / problem.sigma
        a = a * w[:, None]
        b = b * w
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise InvalidInputError("non-finite entries in the linear system")
    sv = np.linalg.svd(a, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if not cond <= condition_cap:
        raise IllPosedError(
            f"{problem.kind} problem with N={problem.N} is ill-posed: condition number "
            f"{cond:.3e} exceeds cap {condition_cap:.1e} (plan {problem.plan.strategy}: "
            f"{np.array2string(problem.plan.points, precision=6)})",
            condition_number=cond, plan=problem.plan,
        )
    if problem.sigma is None:
        lu = scipy.linalg.lu_factor(a)
        x = scipy.linalg.lu_solve(lu, b)
    else:
        x = scipy.linalg.lstsq(a, b)[0]
    residual = float(np.linalg.norm(problem.matrix @ x - problem.observations))
    return x, cond, residual


def solve_diagonal(problem, reference=None, condition_cap=DEFAULT_CONDITION_CAP):
    """Recover phonon populations; negative entries are kept as they come."""
    if problem.kind != "diagonal":
        raise InvalidInputError("solve_diagonal needs a diagonal problem")
    x, cond, residual = _linear_solve(problem, condition_cap)
    x = np.real(x)
    fid = None
    if reference is not None:
        ref = np.zeros(problem.N)
        r = np.asarray(reference, dtype=float)[:problem.N]
        ref[:r.size] = r
        fid = fidelity_distribution(x, ref)
    return ReconstructionResult(x, cond, residual, "diagonal", fidelity=fid,
                                trace=float(np.sum(x)), metadata=dict(problem.provenance))


def project_to_density(rho):
    """Closest physical state: Hermitian part, clipped eigenvalues, unit trace."""
    herm = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(herm)
    w = np.clip(w, 0.0, None)
    if w.sum() == 0:
        raise InvalidInputError("cannot project a matrix with no positive spectrum")
    w /= w.sum()
    return (v * w) @ v.conj().T


def solve_general(problem, reference=None, condition_cap=DEFAULT_CONDITION_CAP, project=False):
    """Recover the ``N x N`` density matrix ``rho[m, n] = C[m N + n]``."""
    if problem.kind != "general":
        raise InvalidInputError("solve_general needs a general problem")
    x, cond, residual = _linear_solve(problem, condition_cap)
    N = problem.N
    rho = np.asarray(x, dtype=complex).reshape(N, N)
    herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
    trace = complex(np.trace(rho))
    if project:
        rho = project_to_density(rho)
    fid = None
    if reference is not None:
        ref = np.asarray(reference, dtype=complex)
        if ref.ndim == 1:
            ref = np.diag(ref)
        full = np.zeros((N, N), dtype=complex)
        k = min(N, ref.shape[0])
        full[:k, :k] = ref[:k, :k]
        fid = fidelity_density(full, rho)
    meta = dict(problem.provenance)
    meta["projected"] = bool(project)
    return ReconstructionResult(rho, cond, residual, "general", fidelity=fid,
                                hermiticity_deviation=herm_dev, trace=trace,
                                projected=project, metadata=meta)


def solve(problem, **kwargs):
    if problem.kind == "diagonal":
        return solve_diagonal(problem, **kwargs)
    return solve_general(problem, **kwargs)


@dataclass
class ScanResult:
    """Outcome of stepping the truncation dimension upward."""

    converged: bool
    converged_N: int
    history: list

    def entry(self, N):
        for row in self.history:
            if row["N"] == N:
                return row
        raise KeyError(N)


def _l1_change(a, b):
    a = np.ravel(a)
    b = np.ravel(b)
    size = max(a.size, b.size)
    pa = np.zeros(size, dtype=np.result_type(a, b))
    pb = np.zeros(size, dtype=np.result_type(a, b))
    if a.ndim and np.asarray(a).size:
        pa[:a.size] = a
    pb[:b.size] = b
    return float(np.sum(np.abs(pa - pb)))


def _pad_matrix(rho, size):
    out = np.zeros((size, size), dtype=complex)
    out[:rho.shape[0], :rho.shape[1]] = rho
    return out


def convergence_scan(spectrum_provider, N_range, plan_strategy, tol=1e-3, mode="diagonal",
                     kernel=None, params=None, n_d=None, reference=None,
                     condition_cap=DEFAULT_CONDITION_CAP):
    """Increase ``N`` until consecutive reconstructions stop changing.

    Parameters
    ----------
    spectrum_provider : callable
        ``plan -> spectral values`` at the plan points (measured or synthetic).
    N_range : (int, int)
        Inclusive range of truncation dimensions.
    plan_strategy : callable
        ``N -> SamplePlan``; for ``mode="general"`` it must return ``N*N`` points.
    tol : float
        L1 threshold on the change between consecutive solutions.

    Returns
    -------
    ScanResult
        ``converged_N`` is the first ``N`` whose solution changes by less
        than ``tol`` over the next two steps.  Ill-posed steps are recorded
        in the history and break the stability chain.
    """
    n_min, n_max = N_range
    if n_min < 1 or n_max < n_min:
        raise InvalidInputError(f"invalid N range {N_range}")
    history = []
    prev = None
    for N in range(int(n_min), int(n_max) + 1):
        plan = plan_strategy(N)
        values = spectrum_provider(plan)
        row = {"N": N, "plan": plan.points.tolist()}
        try:
            if mode == "diagonal":
                problem = build_diagonal_problem(plan, values, params, n_d, kernel=kernel)
                res = solve_diagonal(problem, reference=reference, condition_cap=condition_cap)
            else:
                problem = build_general_problem(plan, values, params, n_d, kernel=kernel)
                res = solve_general(problem, reference=reference, condition_cap=condition_cap)
        except IllPosedError as exc:
            row.update(solution=None, condition_number=exc.condition_number, residual=None,
                       fidelity=None, change=None, ill_posed=True)
            history.append(row)
            prev = None
            continue
        change = None
        if prev is not None:
            if mode == "diagonal":
                change = _l1_change(prev, res.solution)
            else:
                size = max(prev.shape[0], N)
                change = _l1_change(_pad_matrix(prev, size), _pad_matrix(res.solution, size))
        row.update(solution=res.solution, condition_number=res.condition_number,
                   residual=res.residual, fidelity=res.fidelity, change=change, ill_posed=False)
        history.append(row)
        prev = res.solution

    converged_N = None
    for i, row in enumerate(history):
        row["stable"] = False
    for i in range(len(history) - 2):
        a, b = history[i + 1]["change"], history[i + 2]["change"]
        if a is not None and b is not None and a < tol and b < tol:
            history[i]["stable"] = True
            if converged_N is None:
                converged_N = history[i]["N"]
    return ScanResult(converged_N is not None, converged_N, history)
