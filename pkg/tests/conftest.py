import numpy as np
import pytest

from optomech_tomo import SystemParams

# values printed in the worked example (units: 1e-2/omega_m for K, Q; 1e-1/omega_m for M, S)
APPENDIX_POINTS = np.array([-0.238903, -4.15271, -2.18112, 4.7646,
                            -4.45749, -3.34587, 4.92128, -0.361181])

APPENDIX_K = 1e-2 * np.array([
    [1.47341, 1.00608, 1.11404, 0.68844, 1.09823, 0.88438, 0.68566, 0.85648],
    [3.65773, 4.03497, 2.57462, 2.59686, 1.30956, 2.41597, 3.19158, 2.85843],
    [3.41250, 1.63790, 1.47325, 1.71805, 1.63361, 1.60156, 1.29623, 1.45646],
    [0.06990, 0.07098, 0.40837, 1.06732, 1.02115, 0.63968, 0.65275, 0.74980],
    [0.89358, 0.83841, 0.42001, 0.63426, 0.46637, 0.64601, 0.76208, 0.63524],
    [1.26672, 0.81926, 0.54281, 0.61829, 0.87052, 0.58272, 0.45410, 0.68421],
    [0.09186, 0.85753, 3.79587, 6.18143, 4.41536, 3.26403, 4.17912, 4.42602],
    [0.71383, 0.72236, 0.57617, 0.36789, 0.74751, 0.44229, 0.36831, 0.56118],
])

APPENDIX_Q = 1e-2 * np.array([1.23094, 3.44540, 2.50507, 0.22298,
                              0.78367, 0.99037, 1.37427, 0.66994])

APPENDIX_P = np.array([0.50106, 0.24944, 0.12506, 0.06358,
                       0.03105, 0.01592, 0.00566, 0.00766])

APPENDIX_P_EXACT = np.array([0.5, 0.25, 0.125, 0.0625, 0.03125,
                             0.015625, 0.0078125, 0.00390625])

_nan = np.nan
# columns 4, 7, 8 are only given through the conjugation rule
APPENDIX_M = 1e-1 * np.array([
    [2.65078, 0.72701 + 0.06619j, 0.31389 + 0.04904j, _nan, 2.73543, 0.92622 + 0.09507j, _nan, _nan, 3.47639],
    [2.68039, 0.78019 + 0.06690j, 0.50595 + 0.05111j, _nan, 3.01083, 1.1303 + 0.10038j, _nan, _nan, 2.86101],
    [2.79261, 0.84290 + 0.06965j, 0.53053 + 0.05412j, _nan, 3.12871, 1.48178 + 0.10416j, _nan, _nan, 3.40431],
    [2.98886, 1.00804 + 0.07440j, 0.57164 + 0.02008j, _nan, 3.30036, 1.37987 + 0.02789j, _nan, _nan, 3.50278],
    [3.26298, 1.15702 + 0.05181j, 0.57538 - 0.10663j, _nan, 3.49535, 1.26968 - 0.08778j, _nan, _nan, 2.89283],
    [3.59519, 1.17639 - 0.02772j, 0.24166 - 0.25788j, _nan, 3.33098, 0.76202 - 0.12633j, _nan, _nan, 2.43629],
    [3.86136, 0.87698 - 0.13806j, -0.43399 - 0.29357j, _nan, 2.78533, -0.16378 - 0.10401j, _nan, _nan, 1.68726],
    [3.85851, 0.08117 - 0.21613j, -1.30234 - 0.18395j, _nan, 1.95965, -0.72898 - 0.11875j, _nan, _nan, 1.76493],
    [3.38095, -1.0129 - 0.22813j, -1.67703 - 0.02836j, _nan, 1.51133, -0.61621 - 0.17913j, _nan, _nan, 2.29425],
])
for _a, _b in ((1, 3), (2, 6), (5, 7)):
    APPENDIX_M[:, _b] = np.conj(APPENDIX_M[:, _a])

APPENDIX_S = 1e-1 * np.array([2.85246, 2.62496, 2.87073, 2.9511, 2.80948,
                              2.85702, 2.90594, 3.17267, 3.24202])

APPENDIX_RHO = np.array([[1, -1j, -1], [1j, 1, -1j], [-1, 1j, 1]]) / 3.0

ND_MODEL = 48
ND_REFERENCE = 60


@pytest.fixture
def appendix_params():
    return SystemParams.from_ratios(2.0, 0.1)



# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(("" if ok else "[fail] ") + d for ok, d in parts)
        terminalreporter.write_line(f"criterion {crit:2d}: {status}  {detail}")
