"""Spectral tooling: SVD, rank measures, histograms, spectrum reports.

The SVD is a one-sided Jacobi iteration: plane rotations orthogonalise the
columns of the working matrix until every pairwise normalised inner
product falls below tolerance, after which column norms are the singular
values.  It is iterative, converges quadratically at desk scale, and
raises with the residual if the sweep budget runs out.

``jacobi_eigenvalues`` is a deliberately separate classical Jacobi
eigensolver used by the test suite as an independent oracle on the Gram
matrix M^T M; it shares no code with the SVD path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


def jacobi_svd(
    m: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD of a rank-2 matrix: returns (u, s, vt) with m = u @ diag(s) @ vt.

    Singular values come back sorted descending and non-negative.  ``tol``
    bounds |c_i . c_j| / (|c_i| |c_j|) over all column pairs at exit.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"svd needs a rank-2 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd needs finite entries")
    if m.shape[0] < m.shape[1]:
        u, s, vt = jacobi_svd(m.T, tol=tol, max_sweeps=max_sweeps)
        return vt.T, s, u.T

    rows, cols = m.shape
    work = m.copy()
    v = np.eye(cols)
    residual = np.inf
    for _ in range(max_sweeps):
        residual = 0.0
        # Columns whose mass is pure rounding noise relative to the largest
        # column are converged zeros; their mutual angles never settle and
        # must not gate convergence.
        max_sq = float(np.max(np.sum(work * work, axis=0)))
        zero_sq = max_sq * 1e-28
        for i in range(cols - 1):
            for j in range(i + 1, cols):
                ci = work[:, i]
                cj = work[:, j]
                alpha = float(ci @ ci)
                beta = float(cj @ cj)
                if alpha <= zero_sq or beta <= zero_sq:
                    continue
                gamma = float(ci @ cj)
                off = abs(gamma) / np.sqrt(alpha * beta)
                residual = max(residual, off)
                if off <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                rot_i = c * ci - s * cj
                rot_j = s * ci + c * cj
                work[:, i] = rot_i
                work[:, j] = rot_j
                vi = v[:, i].copy()
                vj = v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"one-sided Jacobi did not reach tol {tol:g} in {max_sweeps} sweeps "
            f"(residual {residual:g})"
        )

    norms = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    work = work[:, order]
    v = v[:, order]
    u = np.zeros((rows, cols))
    for i in range(cols):
        if norms[i] > 0.0:
            u[:, i] = work[:, i] / norms[i]
        else:
            u[i % rows, i] = 1.0
    return u, norms, v.T


def svd_values(m: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """All min(d, k) singular values, descending."""
    _, s, _ = jacobi_svd(m, tol=tol, max_sweeps=max_sweeps)
    return s


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by classical two-sided Jacobi.

    Independent of the SVD path on purpose: the suite cross-checks
    singular values against sqrt(eig(M^T M)) computed here.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"eigenvalues need a square matrix, got {a.shape}")
    work = a.copy()
    n = work.shape[0]
    scale = max(1.0, float(np.max(np.abs(work))))
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                off = max(off, abs(apq) / scale)
                if abs(apq) / scale <= tol:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, work[q, q] - work[p, p])
                c = np.cos(theta)
                s = np.sin(theta)
                rp = c * work[p, :] - s * work[q, :]
                rq = s * work[p, :] + c * work[q, :]
                work[p, :] = rp
                work[q, :] = rq
                cp = c * work[:, p] - s * work[:, q]
                cq = s * work[:, p] + c * work[:, q]
                work[:, p] = cp
                work[:, q] = cq
        if off <= tol:
            break
    else:
        raise ConvergenceError(
            f"Jacobi eigen iteration did not reach tol {tol:g} in {max_sweeps} sweeps"
        )
    return np.sort(np.diag(work))[::-1].copy()


def numerical_rank(values: np.ndarray, rel_tol: float) -> int:
    """Count of singular values strictly above rel_tol * sigma_max."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or values[0] <= 0.0:
        return 0
    return int(np.sum(values > rel_tol * values[0]))


def effective_rank(values: np.ndarray) -> float:
    """exp(Shannon entropy of sigma_i^2 / sum sigma^2); in [1, len(values)]."""
    values = np.asarray(values, dtype=np.float64)
    energy = values * values
    total = float(np.sum(energy))
    if total <= 0.0:
        raise ValueError("effective rank is undefined for an all-zero spectrum")
    p = energy / total
    nz = p[p > 0.0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def spectrum_histogram(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Right-open bins [e_i, e_{i+1}) plus underflow/overflow at the ends.

    Returns len(edges) + 1 counts summing to len(values).
    """
    values = np.asarray(values, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two histogram edges")
    if np.any(np.diff(edges) <= 0.0):
        raise ValueError("histogram edges must be strictly increasing")
    counts = np.zeros(edges.size + 1, dtype=np.int64)
    for x in values:
        idx = int(np.searchsorted(edges, x, side="right"))
        counts[idx] += 1
    return counts


def default_log_edges(sigma_max: float, decades: int = 8) -> np.ndarray:
    """Logarithmic decade edges from sigma_max * 10**-decades up to sigma_max."""
    if sigma_max <= 0.0:
        raise ValueError("log edges need a positive sigma_max")
    return sigma_max * np.power(10.0, np.arange(-decades, 1, dtype=np.float64))


@dataclass
class SpectrumReport:
    """Singular spectrum summary of one update matrix."""

    name: str
    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    rank_tolerance: float
    rank: int
    eff_rank: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "singular_values": [float(v) for v in self.values],
            "histogram": {
                "edges": [float(e) for e in self.edges],
                "counts": [int(c) for c in self.counts],
            },
            "rank_tolerance": self.rank_tolerance,
            "numerical_rank": self.rank,
            "effective_rank": self.eff_rank,
        }


def spectrum_report(
    name: str,
    matrix: np.ndarray,
    rel_tol: float = 1e-8,
    edges: np.ndarray | None = None,
) -> SpectrumReport:
    values = svd_values(matrix)
    if values[0] <= 0.0:
        raise ValueError("spectrum report needs a nonzero matrix")
    if edges is None:
        edges = default_log_edges(float(values[0]))
    return SpectrumReport(
        name=name,
        values=values,
        edges=np.asarray(edges, dtype=np.float64),
        counts=spectrum_histogram(values, edges),
        rank_tolerance=rel_tol,
        rank=numerical_rank(values, rel_tol),
        eff_rank=effective_rank(values),
    )


def compare_spectra(
    low_rank: np.ndarray,
    nonlinear: np.ndarray,
    full: np.ndarray,
    rel_tol: float = 1e-8,
) -> tuple[list[SpectrumReport], str]:
    """Side-by-side spectra of linear low-rank, nonlinear and dense updates.

    All three matrices must share one shape (they were trained on the same
    objective).  The summary line states how the ranks compare.
    """
    if not (low_rank.shape == nonlinear.shape == full.shape):
        raise ValueError(
            f"update shapes differ: {low_rank.shape}, {nonlinear.shape}, {full.shape}"
        )
    edges = default_log_edges(float(svd_values(full)[0]))
    reports = [
        spectrum_report("low_rank", low_rank, rel_tol, edges),
        spectrum_report("nonlinear", nonlinear, rel_tol, edges),
        spectrum_report("full", full, rel_tol, edges),
    ]
    lr, nl, fl = reports
    summary = (
        f"numerical rank at rel_tol {rel_tol:g}: low-rank {lr.rank}, "
        f"nonlinear {nl.rank}, full {fl.rank}; effective ranks "
        f"{lr.eff_rank:.2f} / {nl.eff_rank:.2f} / {fl.eff_rank:.2f} "
        f"(dense update keeps a wide spectrum, the linear adapter collapses it, "
        f"the nonlinear map sits between)"
    )
    return reports, summary
