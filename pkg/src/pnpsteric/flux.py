"""Face mobilities and the discrete entropy production."""
from __future__ import annotations

import numpy as np

MOBILITIES = ("arithmetic", "upwind")


def face_mobility(u, w, k, l, kind="arithmetic"):
    """Face concentrations ``m(u_K, u_L)`` and their partial derivatives.

    Returns ``(m, dm_dK, dm_dL)``, each of shape ``(n_faces, n_species)``.
    Upwinding takes ``u`` from the cell with the larger entropy variable.
    """
    uk, ul = u[k], u[l]
    if kind == "arithmetic":
        half = np.full(uk.shape, 0.5)
        return 0.5 * (uk + ul), half, half
    if kind == "upwind":
        up = w[k] >= w[l]
        return np.where(up, uk, ul), up.astype(float), (~up).astype(float)
    raise ValueError(f"unknown mobility {kind!r}; expected one of {MOBILITIES}")


def production(grid, u, w, kind="arithmetic") -> float:
    """``sum_i sum_faces T * m_i * (w_iK - w_iL)**2`` over interior faces."""
    k, l = grid.face_k, grid.face_l
    if k.size == 0:
        return 0.0
    m, _, _ = face_mobility(u, w, k, l, kind)
    dw = w[k] - w[l]
    return float(np.sum(grid.face_t[:, None] * m * dw * dw))
