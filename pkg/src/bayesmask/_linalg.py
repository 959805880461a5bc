import numpy as np
from scipy import linalg

from .errors import SingularSystemError


def solve_spd(a: np.ndarray, rhs: np.ndarray, rcond: float = 1e-14) -> np.ndarray:
    """Solve ``a @ x = rhs`` for symmetric positive definite ``a``.

    The system is Jacobi-scaled first so that a feature with a tiny but
    non-zero scale does not count as singular.  Raises
    :class:`SingularSystemError` when the scaled matrix is not numerically
    positive definite.
    """
    a = np.asarray(a, dtype=float)
    d = np.sqrt(np.diag(a))
    if np.any(~(d > 0.0)):
        raise SingularSystemError("matrix has a zero diagonal entry")
    scaled = a / np.outer(d, d)
    try:
        c, lower = linalg.cho_factor(scaled, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("matrix is not positive definite") from exc
    diag = np.abs(np.diag(c))
    if (diag.min() / diag.max()) ** 2 < rcond:
        raise SingularSystemError("matrix is numerically singular")
    rhs = np.asarray(rhs, dtype=float)
    scale = d if rhs.ndim == 1 else d[:, None]
    return linalg.cho_solve((c, lower), rhs / scale, check_finite=False) / scale
