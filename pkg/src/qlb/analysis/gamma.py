"""Anti-concentration constants of Upsilon X_{<=t} and Upsilon^- X_{<=t}."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import minres

from .._rows import powers_of
from ..algorithms import sum_binom_powers
from ..errors import CapExceeded, RankCollapse
from ..fourier import FourierState
from ..partitions import PartitionOrbit, from_mask
from ..transfer import ResponseSet, pushforwards

log = logging.getLogger(__name__)

DENSE_MAX = 2000
DEFAULT_MAX_BASIS = 50_000
RANK_TOL = 1e-10
POWER_RTOL = 1e-8
POWER_MAX_ITER = 10_000


@dataclass
class GammaReport:
    orbit: str
    flavor: str
    n: int
    q: int
    t: int
    gamma: float
    gamma_per_response: dict[tuple[int, ...], float]
    rank: int | None
    rank_tol: float
    basis_size: int
    method: str
    argmax: tuple[int, ...] = field(default=())


def sigma_basis(n: int, q: int, t: int) -> np.ndarray:
    """Codes of every sigma with support at most t, in increasing order."""
    pw = powers_of(q, n)
    codes = []
    for size in range(min(t, n) + 1):
        for supp in itertools.combinations(range(n), size):
            if not supp:
                codes.append(0)
                continue
            vals = np.array(list(itertools.product(range(1, q), repeat=size)), dtype=np.int64)
            codes.extend((vals @ pw[list(supp)]).tolist())
    return np.array(sorted(codes), dtype=np.int64)


def restricted_matrix(orbit: PartitionOrbit, q: int, t: int, flavor: str, max_basis: int = DEFAULT_MAX_BASIS):
    """Sparse matrix of Upsilon (or Upsilon^-) on the chi_sigma basis of X_{<=t}.

    Returns (A, row member ids, column sigma codes); rows are the distinct
    (member, tau) keys in increasing order.
    """
    if flavor not in ("transfer", "minus"):
        raise ValueError(f"flavor must be transfer or minus, got {flavor!r}")
    size = sum_binom_powers(orbit.n, q, t)
    if size > max_basis:
        raise CapExceeded(f"basis of X_<=t has {size} vectors, cap is {max_basis}")
    codes = sigma_basis(orbit.n, q, t)
    probe = FourierState(orbit.n, q, codes, np.ones((codes.size, 1)))
    row_keys, cols = [], []
    for push in pushforwards(probe, orbit):
        s_idx, c_idx = np.nonzero(push.mask(flavor))
        row_keys.append(push.keys[s_idx, c_idx])
        cols.append(s_idx)
    row_keys = np.concatenate(row_keys) if row_keys else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    uniq, rows = np.unique(row_keys, return_inverse=True)
    data = np.full(rows.size, 1 / np.sqrt(len(orbit)))
    A = sp.csr_matrix((data, (rows.ravel(), cols)), shape=(uniq.size, codes.size))
    A.sum_duplicates()
    return A, uniq // q**orbit.num_blocks, codes


def _range_whitener(G: np.ndarray, rank_tol: float):
    """Orthonormalise the column space of A from its Gram matrix G = A^T A.

    Eigenvalues of G are squared singular values of A, and float64 resolves
    them only to about 1e-16 of the largest, so the cut is applied to the
    eigenvalues themselves at ``rank_tol`` relative.
    """
    evals, evecs = np.linalg.eigh(G)
    top = evals[-1] if evals.size else 0.0
    if top <= 0 or not np.isfinite(top):
        raise RankCollapse("the restricted operator is zero")
    keep = evals > rank_tol * top
    return evecs[:, keep] / np.sqrt(evals[keep])[None, :], int(keep.sum())


def _power_gamma2(G, G_rho, rng: np.random.Generator, rtol: float, max_iter: int) -> float:
    """Largest eigenvalue of G^+ G_rho on range(G) by power iteration with MINRES solves."""
    x = G @ rng.standard_normal(G.shape[0])
    lam = 0.0
    for it in range(max_iter):
        y, info = minres(G, G_rho @ x, rtol=1e-13, maxiter=5 * G.shape[0])
        norm = np.sqrt(max(y @ (G @ y), 0.0))
        if norm == 0.0:
            return 0.0
        x = y / norm
        new = float(x @ (G_rho @ x))
        if abs(new - lam) <= rtol * max(abs(new), 1e-300):
            log.debug("power iteration converged after %d steps", it + 1)
            return new
        lam = new
    log.warning("power iteration hit the cap of %d steps", max_iter)
    return lam


def compute_gamma(
    orbit: PartitionOrbit,
    flavor: str,
    t: int,
    q: int,
    *,
    responses: ResponseSet | None = None,
    rank_tol: float = RANK_TOL,
    dense_max: int = DENSE_MAX,
    max_basis: int = DEFAULT_MAX_BASIS,
    seed: int = 0,
) -> GammaReport:
    """gamma = max_rho || M_rho restricted to the image of X_{<=t} ||.

    ``flavor`` is "transfer" (Upsilon) or "minus" (Upsilon^-).
    """
    A, row_member, codes = restricted_matrix(orbit, q, t, flavor, max_basis)
    if A.nnz == 0:
        raise RankCollapse(f"{flavor} operator vanishes on X_<={t}")
    responses = responses or ResponseSet(orbit)
    table = responses.member_table()
    G = (A.T @ A).tocsr()
    per_rho: dict[tuple[int, ...], float] = {}
    dense = codes.size <= dense_max
    if dense:
        W, rank = _range_whitener(G.toarray(), rank_tol)
        AW = A @ W
    else:
        rank = None
        rng = np.random.default_rng(seed)
    for r, rho in enumerate(responses.responses):
        rows = np.flatnonzero(table[r][row_member])
        if dense:
            block = AW[rows]
            g2 = float(np.linalg.eigvalsh(block.T @ block)[-1]) if rows.size else 0.0
        else:
            A_rho = A[rows]
            g2 = _power_gamma2(G, (A_rho.T @ A_rho).tocsr(), rng, POWER_RTOL, POWER_MAX_ITER)
        per_rho[from_mask(rho)] = float(np.sqrt(max(g2, 0.0)))
    best = max(per_rho, key=per_rho.get)
    return GammaReport(
        orbit=orbit.describe(),
        flavor=flavor,
        n=orbit.n,
        q=q,
        t=t,
        gamma=per_rho[best],
        gamma_per_response=per_rho,
        rank=rank,
        rank_tol=rank_tol,
        basis_size=int(codes.size),
        method="dense" if dense else "power",
        argmax=best,
    )
