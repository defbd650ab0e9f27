"""Spectra of magnetic operators on refined self-similar networks.

The pipeline is refine -> vertex measure -> assemble -> dense Hermitian
eigensolution.  Eigenvalues reported are those of the nonnegative operator
``M^{-1} A`` (equivalently of the symmetrised ``M^{-1/2} A M^{-1/2}``),
in ascending order; Neumann conditions are the default, Dirichlet pins the
structure's boundary set.  Flux sweeps evaluate one spectrum per flux value
of a single-cycle field; independent flux points may run on a small thread
pool capped by the ``MAGRES_THREADS`` environment variable, with results
assembled in input order so output never depends on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.linalg

from .magnetic import MagneticModel, assemble
from .oneforms import cycle_basis, cycle_field, field_from_spec
from .selfsimilar import PCFStructure, Refinement, refine, vertex_measure

__all__ = [
    "SpectralError",
    "SpectrumReport",
    "FluxSweepReport",
    "ConvergenceReport",
    "hermitian_eigs",
    "spectrum",
    "flux_sweep",
    "convergence_table",
    "compare_spectra",
    "thread_count",
]

#: Dense eigensolution is refused beyond this dimension.
MAX_DENSE_DIM = 4096

#: Relative scale for the positive-semidefiniteness floor of reported spectra.
PSD_FLOOR = 1e-10


class SpectralError(RuntimeError):
    """Raised when an eigensolution violates its accuracy contract."""


def thread_count() -> int:
    """Worker cap for independent spectra, from ``MAGRES_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MAGRES_THREADS", "1")))
    except ValueError:
        return 1


def hermitian_eigs(
    H: np.ndarray,
    compute_vectors: bool = True,
    hermiticity_tol: float = 1e-10,
    residual_tol: float = 1e-9,
):
    """Checked dense Hermitian eigendecomposition, eigenvalues ascending.

    Rejects inputs whose Hermiticity defect exceeds ``hermiticity_tol``
    relative to the largest entry, and enforces the residual bound
    ``max |H v - w v| <= residual_tol * max(1, |w|_max)`` together with
    orthonormality of the eigenvector columns on every call.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    n = H.shape[0]
    if n > MAX_DENSE_DIM:
        raise SpectralError(f"matrix dimension {n} exceeds dense limit {MAX_DENSE_DIM}")
    scale = max(1.0, float(np.max(np.abs(H)))) if n else 1.0
    defect = float(np.max(np.abs(H - H.conj().T))) if n else 0.0
    if defect > hermiticity_tol * scale:
        raise ValueError(f"matrix is not Hermitian: defect {defect:.3e} at scale {scale:.3e}")
    Hs = 0.5 * (H + H.conj().T)
    if not compute_vectors:
        w = scipy.linalg.eigh(Hs, eigvals_only=True, check_finite=False)
        return np.asarray(w, dtype=np.float64)
    w, V = scipy.linalg.eigh(Hs, check_finite=False)
    w = np.asarray(w, dtype=np.float64)
    bound = residual_tol * max(1.0, float(np.max(np.abs(w))) if n else 1.0)
    residual = float(np.max(np.abs(Hs @ V - V * w[None, :]))) if n else 0.0
    if residual > bound:
        raise SpectralError(f"eigensolver residual {residual:.3e} exceeds bound {bound:.3e}")
    gram_defect = float(np.max(np.abs(V.conj().T @ V - np.eye(n)))) if n else 0.0
    if gram_defect > residual_tol:
        raise SpectralError(f"eigenvectors not orthonormal: defect {gram_defect:.3e}")
    return w, V


@dataclass(frozen=True)
class SpectrumReport:
    """Ascending spectrum of a symmetrised assembly plus run metadata.

    Validated at construction: eigenvalues ascend and the lowest one sits
    above ``-1e-10 * max(1, lambda_max)``, the roundoff floor appropriate
    for positive semidefinite operators of that scale.
    """

    eigenvalues: np.ndarray
    metadata: dict = dataclass_field(default_factory=dict)
    eigenvectors: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "eigenvalues", w)
        if w.size == 0:
            raise SpectralError("empty spectrum")
        if np.any(np.diff(w) < 0.0):
            raise SpectralError("eigenvalues must be ascending")
        floor = -PSD_FLOOR * max(1.0, float(w[-1]))
        if w[0] < floor:
            raise SpectralError(
                f"lowest eigenvalue {w[0]:.3e} below the PSD roundoff floor {floor:.3e}"
            )


def _resolve_model(net, model, field) -> MagneticModel:
    if isinstance(model, MagneticModel):
        return model
    if field is None:
        field = "zero"
    arr = field_from_spec(net, field) if isinstance(field, str) else np.asarray(field, dtype=np.float64)
    return MagneticModel(kind=str(model), field=arr)


def _resolve_boundary(ref: Refinement, boundary):
    if boundary == "neumann":
        return "neumann"
    if boundary == "dirichlet":
        return ("dirichlet", ref.boundary)
    return boundary


def spectrum(
    s: PCFStructure,
    level: int,
    model="peierls",
    field="zero",
    measure=None,
    boundary="neumann",
    want_vectors: bool = False,
    renormalization: float = 1.0,
) -> SpectrumReport:
    """Spectrum of the magnetic operator at one refinement level.

    ``field`` is an edge array or a field spec string; ``measure`` a
    per-map weight spec (default: the structure's own weights); ``boundary``
    is ``"neumann"`` or ``"dirichlet"`` (pinning the boundary vertex set).
    Eigenvalues are multiplied by ``renormalization`` before reporting.
    """
    ref = refine(s, int(level))
    if ref.net.vertex_count > MAX_DENSE_DIM:
        raise SpectralError(
            f"level {level} has {ref.net.vertex_count} vertices; dense limit is {MAX_DENSE_DIM}"
        )
    mu = vertex_measure(ref, measure)
    mod = _resolve_model(ref.net, model, field)
    asm = assemble(ref.net, mod, mu, _resolve_boundary(ref, boundary))
    metadata = {
        "structure": s.name or "unnamed",
        "level": int(level),
        "model": mod.kind,
        "boundary": boundary if isinstance(boundary, str) else "dirichlet",
        "measure": "structure" if measure is None else str(measure),
        "field": field if isinstance(field, str) else "array",
        "vertices": int(ref.net.vertex_count),
        "kept": int(asm.kept.size),
        "renormalization": float(renormalization),
    }
    if want_vectors:
        w, V = hermitian_eigs(asm.symmetrized)
        vectors = V / np.sqrt(asm.mass)[:, None]
        return SpectrumReport(w * renormalization, metadata, vectors)
    w = hermitian_eigs(asm.symmetrized, compute_vectors=False)
    return SpectrumReport(w * renormalization, metadata)


@dataclass(frozen=True)
class FluxSweepReport:
    """Spectra of a single-cycle field over a grid of flux values.

    ``table[i]`` holds the first ``k`` eigenvalues at ``fluxes[i]``.  The
    spectrum is ``2 pi``-periodic in the flux and symmetric under flux
    negation.
    """

    fluxes: np.ndarray
    table: np.ndarray
    metadata: dict = dataclass_field(default_factory=dict)


def flux_sweep(
    s: PCFStructure,
    level: int,
    cycle_index: int,
    fluxes,
    model: str = "peierls",
    measure=None,
    boundary: str = "neumann",
    k: int | None = None,
) -> FluxSweepReport:
    """Sweep the flux of one fundamental cycle over a grid of values.

    The field at flux ``t`` is ``t`` times the unit-flux coulomb form of the
    chosen cycle.  Flux points are independent and may be evaluated on a
    thread pool (``MAGRES_THREADS``); rows are assembled in input order.
    """
    fluxes = np.asarray(fluxes, dtype=np.float64)
    if fluxes.ndim != 1 or fluxes.size == 0:
        raise ValueError("flux grid must be a non-empty 1-d array")
    ref = refine(s, int(level))
    if ref.net.vertex_count > MAX_DENSE_DIM:
        raise SpectralError(
            f"level {level} has {ref.net.vertex_count} vertices; dense limit is {MAX_DENSE_DIM}"
        )
    mu = vertex_measure(ref, measure)
    basis = cycle_basis(ref.net)
    unit = cycle_field(ref.net, int(cycle_index), 1.0, basis=basis)
    bnd = _resolve_boundary(ref, boundary)

    def one(t: float) -> np.ndarray:
        mod = MagneticModel(kind=model, field=t * unit)
        asm = assemble(ref.net, mod, mu, bnd)
        return hermitian_eigs(asm.symmetrized, compute_vectors=False)

    workers = min(thread_count(), fluxes.size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, fluxes))
    else:
        rows = [one(t) for t in fluxes]
    k_eff = rows[0].size if k is None else min(int(k), rows[0].size)
    table = np.vstack([row[:k_eff] for row in rows])
    metadata = {
        "structure": s.name or "unnamed",
        "level": int(level),
        "model": model,
        "boundary": boundary,
        "measure": "structure" if measure is None else str(measure),
        "cycle": int(cycle_index),
        "cycles_available": len(basis.cycles),
        "k": int(k_eff),
    }
    return FluxSweepReport(fluxes=fluxes, table=table, metadata=metadata)


@dataclass(frozen=True)
class ConvergenceReport:
    """Low eigenvalues across refinement levels with successive differences.

    ``table[i]`` holds the first ``k`` (possibly renormalised) eigenvalues
    at ``levels[i]``; ``diffs[i]`` the relative change from level ``i`` to
    ``i + 1`` per eigenvalue index.
    """

    levels: tuple[int, ...]
    table: np.ndarray
    diffs: np.ndarray
    metadata: dict = dataclass_field(default_factory=dict)


def convergence_table(
    s: PCFStructure,
    levels,
    k: int = 5,
    model: str = "peierls",
    field: str = "zero",
    measure=None,
    boundary: str = "neumann",
    renormalize: bool = False,
) -> ConvergenceReport:
    """Track the low spectrum across refinement levels.

    With ``renormalize`` the level-``n`` eigenvalues are scaled by ``g^n``
    where ``g`` is the geometric mean of the resistance factors, dividing
    out the per-level conductance growth; raw eigenvalues are the default.
    String field specs are re-realised per level.
    """
    levels = tuple(int(x) for x in levels)
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be a strictly increasing non-empty sequence")
    g = float(np.exp(np.mean([np.log(float(m.r)) for m in s.maps])))
    rows = []
    for lvl in levels:
        factor = g**lvl if renormalize else 1.0
        rep = spectrum(
            s, lvl, model=model, field=field, measure=measure,
            boundary=boundary, renormalization=factor,
        )
        if rep.eigenvalues.size < k:
            raise ValueError(
                f"level {lvl} has only {rep.eigenvalues.size} eigenvalues, need {k}"
            )
        rows.append(rep.eigenvalues[:k])
    table = np.vstack(rows)
    denom = np.maximum(np.abs(table[1:]), 1e-300)
    diffs = np.abs(table[1:] - table[:-1]) / denom
    metadata = {
        "structure": s.name or "unnamed",
        "levels": list(levels),
        "model": model,
        "field": field,
        "boundary": boundary,
        "measure": "structure" if measure is None else str(measure),
        "k": int(k),
        "renormalized": bool(renormalize),
        "renormalization_base": g,
    }
    return ConvergenceReport(levels=levels, table=table, diffs=diffs, metadata=metadata)


def compare_spectra(a, b, k: int | None = None) -> float:
    """Largest absolute difference between the first ``k`` eigenvalues."""
    wa = a.eigenvalues if isinstance(a, SpectrumReport) else np.asarray(a, dtype=np.float64)
    wb = b.eigenvalues if isinstance(b, SpectrumReport) else np.asarray(b, dtype=np.float64)
    if k is None:
        k = min(wa.size, wb.size)
        if wa.size != wb.size:
            raise ValueError(f"spectra have different sizes ({wa.size} vs {wb.size})")
    k = min(int(k), wa.size, wb.size)
    return float(np.max(np.abs(wa[:k] - wb[:k]))) if k else 0.0
