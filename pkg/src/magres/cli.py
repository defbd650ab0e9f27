"""Command-line surface for building networks, spectra, and audits.

Every subcommand emits a single report: a JSON envelope with the tool
version, the echoed configuration, a SHA-256 hash of its canonical form,
a PASS/FAIL verdict, and the command-specific payload.  Reports contain no
timestamps or machine identifiers, so identical configurations produce
byte-identical output.  Exit codes: 0 on PASS, 1 when a checked property
fails, 2 on input or configuration errors.  Table-producing commands can
emit CSV (``structure,level,model,boundary,flux,index,eigenvalue``)
instead of JSON.  The environment variable ``MAGRES_THREADS`` caps
internal parallelism (flux sweeps); output is identical for any setting.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.linalg

from . import __version__
from .magnetic import (
    MagneticModel,
    assemble,
    dirichlet_solve,
    gauge_transform,
    zero_mode_test,
)
from .network import (
    NetworkError,
    conductance_deviation,
    network_to_dict,
    trace_to,
)
from .oneforms import cycle_basis, cycle_fluxes, field_from_spec, hodge_decompose, inner
from .selfsimilar import (
    StructureError,
    bundled_structure,
    cell_partition,
    load_structure,
    parse_measure_spec,
    refine,
    verify_compatibility,
    vertex_measure,
)
from .spectral import (
    SpectralError,
    compare_spectra,
    convergence_table,
    flux_sweep,
    hermitian_eigs,
    spectrum,
)
from .measure_audit import MIN_KLMN_M, full_audit

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2

BUNDLED_NAMES = ("interval", "circle", "gasket")

TWO_PI = 2.0 * np.pi


class InputError(ValueError):
    """Configuration or input-file problem; maps to exit code 2."""


# ---------------------------------------------------------------------------
# serialization helpers


def _py(obj):
    """Recursively convert numpy/Fraction values to plain JSON-ready types."""
    if isinstance(obj, dict):
        return {str(k): _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _pairs(values) -> list:
    """Complex vector as a list of [re, im] pairs."""
    arr = np.asarray(values, dtype=np.complex128)
    return [[float(v.real), float(v.imag)] for v in arr]


def _matrix_json(matrix) -> dict:
    """Dense matrix as row-major [re, im] pairs."""
    m = np.asarray(matrix, dtype=np.complex128)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "values": [[float(v.real), float(v.imag)] for v in m.reshape(-1)],
    }


def _envelope(command: str, config: dict, verdict: str, report: dict) -> dict:
    config = _py(config)
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return {
        "tool": "magres",
        "version": __version__,
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "verdict": verdict,
        "report": _py(report),
    }


def _dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write_output(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_table(rows) -> str:
    """Rows of (structure, level, model, boundary, flux, index, eigenvalue)."""
    lines = ["structure,level,model,boundary,flux,index,eigenvalue"]
    for structure, level, model, boundary, flux, index, eig in rows:
        flux_txt = "" if flux is None else repr(float(flux))
        lines.append(
            f"{structure},{int(level)},{model},{boundary},{flux_txt},{int(index)},{repr(float(eig))}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument resolution


def _resolve_structure(text: str):
    path = Path(text)
    if path.is_file():
        try:
            return load_structure(path)
        except json.JSONDecodeError as exc:
            raise InputError(f"{text}: malformed JSON: {exc}") from exc
        except StructureError as exc:
            raise InputError(f"{text}: {exc}") from exc
    if text in BUNDLED_NAMES:
        return bundled_structure(text)
    raise InputError(
        f"structure {text!r} is neither an existing file nor one of the "
        f"bundled names {', '.join(BUNDLED_NAMES)}"
    )


def _resolve_weights(spec, map_count):
    try:
        return parse_measure_spec(spec, map_count)
    except StructureError as exc:
        raise InputError(f"measure spec {spec!r}: {exc}") from exc


def _resolve_field(net, spec: str) -> np.ndarray:
    try:
        return field_from_spec(net, spec)
    except (ValueError, IndexError) as exc:
        raise InputError(str(exc)) from exc


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"grid {text!r} must have the form start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"grid {text!r}: {exc}") from exc
    if count < 1:
        raise InputError("grid count must be at least 1")
    if not (np.isfinite(start) and np.isfinite(stop)):
        raise InputError("grid endpoints must be finite")
    return np.linspace(start, stop, count)


def _parse_levels(text: str) -> list[int]:
    try:
        levels = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise InputError(f"levels {text!r}: {exc}") from exc
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 0:
        raise InputError("levels must be a strictly increasing list of nonnegative integers")
    return levels


def _parse_radii(text: str | None):
    if text is None:
        return None
    try:
        radii = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise InputError(f"radii {text!r}: {exc}") from exc
    if not radii or any(r <= 0 for r in radii):
        raise InputError("radii must be positive numbers")
    return radii


def _parse_vertex_set(text: str, ref) -> list[int]:
    """Pinned-set spec: 'boundary', comma-separated indices, or a JSON file."""
    if text == "boundary":
        indices = list(ref.boundary)
    elif Path(text).is_file():
        try:
            data = json.loads(Path(text).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{text}: malformed JSON: {exc}") from exc
        if not isinstance(data, list):
            raise InputError(f"{text}: expected a JSON list of vertex indices")
        indices = data
    else:
        try:
            indices = [int(p) for p in text.split(",") if p.strip()]
        except ValueError as exc:
            raise InputError(f"vertex set {text!r}: {exc}") from exc
    out = []
    for v in indices:
        v = int(v)
        if not 0 <= v < ref.net.vertex_count:
            raise InputError(f"vertex {v} out of range [0, {ref.net.vertex_count})")
        out.append(v)
    if not out:
        raise InputError("pinned vertex set must be non-empty")
    return sorted(set(out))


def _parse_rhs(text: str, n: int) -> np.ndarray:
    """Right-hand side spec: delta:<i>, constant:<v>, or a JSON file."""
    parts = text.split(":")
    if parts[0] == "delta" and len(parts) == 2:
        try:
            i = int(parts[1])
        except ValueError as exc:
            raise InputError(f"rhs {text!r}: {exc}") from exc
        if not 0 <= i < n:
            raise InputError(f"rhs vertex {i} out of range")
        rhs = np.zeros(n)
        rhs[i] = 1.0
        return rhs
    if parts[0] == "constant" and len(parts) == 2:
        try:
            return np.full(n, float(parts[1]))
        except ValueError as exc:
            raise InputError(f"rhs {text!r}: {exc}") from exc
    if Path(text).is_file():
        try:
            data = json.loads(Path(text).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{text}: malformed JSON: {exc}") from exc
        if not isinstance(data, list) or len(data) != n:
            raise InputError(f"{text}: expected a JSON list of {n} values")
        try:
            vals = [complex(v[0], v[1]) if isinstance(v, list) else complex(v) for v in data]
        except (TypeError, ValueError, IndexError) as exc:
            raise InputError(f"{text}: bad value: {exc}") from exc
        arr = np.asarray(vals, dtype=np.complex128)
        return arr.real if np.all(arr.imag == 0.0) else arr
    raise InputError(
        f"rhs {text!r} is neither delta:<i>, constant:<v>, nor an existing JSON file"
    )


def _geometric_mean_r(s) -> float:
    return float(np.exp(np.mean([np.log(float(m.r)) for m in s.maps])))


def _prepare(args):
    """Common resolution: structure, refinement, measure, boundary indices."""
    s = _resolve_structure(args.structure)
    level = int(args.level)
    if level < 0:
        raise InputError("level must be nonnegative")
    weights = _resolve_weights(getattr(args, "measure", None) or "structure", s.map_count)
    try:
        ref = refine(s, level)
    except StructureError as exc:
        raise InputError(str(exc)) from exc
    mu = vertex_measure(ref, weights)
    return s, ref, mu


def _boundary_arg(args, ref):
    if getattr(args, "boundary", "neumann") == "dirichlet":
        return ("dirichlet", ref.boundary)
    return "neumann"


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(args) -> int:
    s, ref, mu = _prepare(args)
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "measure": args.measure,
        "out_dir": args.out_dir,
        "prefix": args.prefix,
        "tol": float(args.tol),
        "skip_check": bool(args.skip_check),
    }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = args.prefix or f"{s.name or 'structure'}-L{int(args.level)}"

    net_payload = network_to_dict(ref.net)
    net_payload["labels"] = list(ref.names)
    measure_payload = {
        "structure": s.name or "unnamed",
        "level": int(args.level),
        "measure": args.measure,
        "labels": list(ref.names),
        "mass": [float(x) for x in mu.mass],
        "total": float(mu.total),
    }
    part = cell_partition(ref)
    cells_payload = {
        "structure": s.name or "unnamed",
        "level": int(args.level),
        "cells": {k: list(v) for k, v in part.cells.items()},
    }
    files = {
        "network": str(out_dir / f"{prefix}.network.json"),
        "measure": str(out_dir / f"{prefix}.measure.json"),
        "cells": str(out_dir / f"{prefix}.cells.json"),
    }
    Path(files["network"]).write_text(_dump_json(_py(net_payload)), encoding="utf-8")
    Path(files["measure"]).write_text(_dump_json(_py(measure_payload)), encoding="utf-8")
    Path(files["cells"]).write_text(_dump_json(_py(cells_payload)), encoding="utf-8")

    compat = None
    verdict = "PASS"
    if not args.skip_check:
        rep = verify_compatibility(s, int(args.level), tol=float(args.tol))
        compat = {
            "level": rep.level,
            "max_deviation": rep.max_deviation,
            "tol": rep.tol,
            "passed": rep.passed,
        }
        if not rep.passed:
            verdict = "FAIL"
    report = {
        "files": files,
        "vertices": int(ref.net.vertex_count),
        "edges": int(ref.net.edge_count),
        "boundary": [ref.names[i] for i in ref.boundary],
        "compatibility": compat,
    }
    _write_output(_dump_json(_envelope("build", config, verdict, report)), args.output)
    return EXIT_PASS if verdict == "PASS" else EXIT_FAIL


def cmd_spectrum(args) -> int:
    s, ref, mu = _prepare(args)
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "model": args.model,
        "field": args.field,
        "measure": args.measure,
        "boundary": args.boundary,
        "k": args.k,
        "renormalize": bool(args.renormalize),
        "format": args.format,
    }
    field = _resolve_field(ref.net, args.field)
    model = MagneticModel(kind=args.model, field=field)
    factor = _geometric_mean_r(s) ** int(args.level) if args.renormalize else 1.0
    asm = assemble(ref.net, model, mu, _boundary_arg(args, ref))
    eigs = hermitian_eigs(asm.symmetrized, compute_vectors=False) * factor
    if args.export_matrix:
        Path(args.export_matrix).write_text(
            _dump_json(_matrix_json(asm.matrix)), encoding="utf-8"
        )
    k = len(eigs) if args.k is None else min(int(args.k), len(eigs))
    metadata = {
        "structure": s.name or "unnamed",
        "level": int(args.level),
        "model": args.model,
        "boundary": args.boundary,
        "measure": args.measure,
        "field": args.field,
        "vertices": int(ref.net.vertex_count),
        "kept": int(asm.kept.size),
        "renormalization": factor,
    }
    if args.format == "csv":
        rows = [
            (metadata["structure"], args.level, args.model, args.boundary, None, i, eigs[i])
            for i in range(k)
        ]
        _write_output(_csv_table(rows), args.output)
        return EXIT_PASS
    report = {"metadata": metadata, "eigenvalues": [float(x) for x in eigs[:k]]}
    _write_output(_dump_json(_envelope("spectrum", config, "PASS", report)), args.output)
    return EXIT_PASS


def cmd_flux_sweep(args) -> int:
    s = _resolve_structure(args.structure)
    if int(args.level) < 0:
        raise InputError("level must be nonnegative")
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "model": args.model,
        "cycle": int(args.cycle),
        "grid": args.grid,
        "measure": args.measure,
        "boundary": args.boundary,
        "k": args.k,
        "tol": float(args.tol),
        "format": args.format,
    }
    grid = _parse_grid(args.grid)
    weights = _resolve_weights(args.measure or "structure", s.map_count)
    try:
        sweep = flux_sweep(
            s,
            int(args.level),
            int(args.cycle),
            grid,
            model=args.model,
            measure=weights,
            boundary=args.boundary,
            k=args.k,
        )
    except IndexError as exc:
        raise InputError(f"cycle index {args.cycle}: {exc}") from exc

    # spectra must repeat at fluxes equal mod 2*pi and agree under negation
    tol = float(args.tol)
    periodic_pairs = 0
    symmetric_pairs = 0
    max_pair_dev = 0.0
    m = len(grid)
    for i in range(m):
        for j in range(i + 1, m):
            diff = abs(grid[i] - grid[j]) % TWO_PI
            total = abs(grid[i] + grid[j]) % TWO_PI
            is_periodic = min(diff, TWO_PI - diff) <= 1e-9 and grid[i] != grid[j]
            is_symmetric = min(total, TWO_PI - total) <= 1e-9
            if not (is_periodic or is_symmetric):
                continue
            dev = float(np.max(np.abs(sweep.table[i] - sweep.table[j])))
            max_pair_dev = max(max_pair_dev, dev)
            periodic_pairs += int(is_periodic)
            symmetric_pairs += int(is_symmetric)
    verdict = "PASS" if max_pair_dev <= tol else "FAIL"

    if args.format == "csv":
        rows = []
        name = sweep.metadata["structure"]
        for i, flux in enumerate(sweep.fluxes):
            for idx, eig in enumerate(sweep.table[i]):
                rows.append((name, args.level, args.model, args.boundary, flux, idx, eig))
        _write_output(_csv_table(rows), args.output)
        return EXIT_PASS if verdict == "PASS" else EXIT_FAIL
    report = {
        "metadata": sweep.metadata,
        "fluxes": [float(x) for x in sweep.fluxes],
        "eigenvalues": [[float(x) for x in row] for row in sweep.table],
        "checks": {
            "periodic_pairs": periodic_pairs,
            "symmetric_pairs": symmetric_pairs,
            "max_pair_deviation": max_pair_dev,
            "tol": tol,
        },
    }
    _write_output(_dump_json(_envelope("flux-sweep", config, verdict, report)), args.output)
    return EXIT_PASS if verdict == "PASS" else EXIT_FAIL


def cmd_converge(args) -> int:
    s = _resolve_structure(args.structure)
    levels = _parse_levels(args.levels)
    weights = _resolve_weights(args.measure or "structure", s.map_count)
    config = {
        "structure": args.structure,
        "levels": args.levels,
        "k": int(args.k),
        "model": args.model,
        "field": args.field,
        "measure": args.measure,
        "boundary": args.boundary,
        "renormalize": bool(args.renormalize),
        "format": args.format,
    }
    try:
        rep = convergence_table(
            s,
            levels,
            k=int(args.k),
            model=args.model,
            field=args.field,
            measure=weights,
            boundary=args.boundary,
            renormalize=bool(args.renormalize),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.format == "csv":
        rows = []
        name = rep.metadata["structure"]
        for i, lvl in enumerate(rep.levels):
            for idx, eig in enumerate(rep.table[i]):
                rows.append((name, lvl, args.model, args.boundary, None, idx, eig))
        _write_output(_csv_table(rows), args.output)
        return EXIT_PASS
    report = {
        "metadata": rep.metadata,
        "levels": list(rep.levels),
        "eigenvalues": [[float(x) for x in row] for row in rep.table],
        "relative_diffs": [[float(x) for x in row] for row in rep.diffs],
    }
    _write_output(_dump_json(_envelope("converge", config, "PASS", report)), args.output)
    return EXIT_PASS


def cmd_audit(args) -> int:
    if float(args.M) <= MIN_KLMN_M:
        raise InputError(
            f"--M must exceed 20/3 ~= {MIN_KLMN_M:.4f} for a margin below 1, got {args.M}"
        )
    s, ref, mu = _prepare(args)
    field_spec = args.field if args.field is not None else f"random:{int(args.seed)}"
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "measure": args.measure,
        "field": field_spec,
        "M": float(args.M),
        "trials": int(args.trials),
        "seed": int(args.seed),
        "balls": int(args.balls),
        "poincare_trials": int(args.poincare_trials),
        "radii": args.radii,
        "tol": float(args.tol),
    }
    a = _resolve_field(ref.net, field_spec)
    rep = full_audit(
        ref.net,
        mu,
        a,
        M=float(args.M),
        trials=int(args.trials),
        seed=int(args.seed),
        radii=_parse_radii(args.radii),
        ball_count=int(args.balls),
        poincare_trials=int(args.poincare_trials),
        tol=float(args.tol),
    )
    verdict = "PASS" if rep.passed else "FAIL"
    report = {
        "m_profile": [[r, m] for r, m in rep.m_profile],
        "doubling_profile": [[r, q] for r, q in rep.doubling_profile],
        "metric_doubling": rep.metric_doubling,
        "worst_poincare_ratio": rep.worst_poincare_ratio,
        "sup_bound_constant": rep.sup_bound_constant,
        "klmn": {
            "epsilon": rep.klmn.epsilon,
            "C": rep.klmn.constant,
            "fa_constant": rep.klmn.fa_constant,
            "M": rep.klmn.M,
            "max_violation": rep.klmn.max_violation,
            "worst_slack": rep.klmn.worst_slack,
            "violations": rep.klmn.violations,
            "passed": rep.klmn.passed,
        },
        "details": rep.details,
        "passed": rep.passed,
    }
    _write_output(_dump_json(_envelope("audit", config, verdict, report)), args.output)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_gauge_check(args) -> int:
    s, ref, mu = _prepare(args)
    field_spec = args.field if args.field is not None else f"random:{int(args.seed)}"
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "model": args.model,
        "field": field_spec,
        "measure": args.measure,
        "boundary": args.boundary,
        "count": int(args.count),
        "seed": int(args.seed),
        "tol": float(args.tol),
    }
    base_field = _resolve_field(ref.net, field_spec)
    bnd = _boundary_arg(args, ref)
    rng = np.random.default_rng(int(args.seed))
    lams = [rng.standard_normal(ref.net.vertex_count) for _ in range(int(args.count))]

    def eigs_of(model: MagneticModel) -> np.ndarray:
        return hermitian_eigs(assemble(ref.net, model, mu, bnd).symmetrized, compute_vectors=False)

    if args.model == "peierls":
        base = MagneticModel(kind="peierls", field=base_field)
        ref_eigs = eigs_of(base)
        zero_eigs = eigs_of(MagneticModel(kind="peierls", field=np.zeros(ref.net.edge_count)))
        gauge_dev = 0.0
        exact_dev = 0.0
        for lam in lams:
            gauge_dev = max(gauge_dev, compare_spectra(ref_eigs, eigs_of(gauge_transform(ref.net, base, lam))))
            exact_model = gauge_transform(
                ref.net, MagneticModel(kind="peierls", field=np.zeros(ref.net.edge_count)), lam
            )
            exact_dev = max(exact_dev, compare_spectra(zero_eigs, eigs_of(exact_model)))
        scale = max(1.0, float(np.max(np.abs(ref_eigs))))
        passed = gauge_dev <= float(args.tol) * scale and exact_dev <= float(args.tol) * scale
        report = {
            "model": "peierls",
            "count": int(args.count),
            "max_gauge_deviation": gauge_dev,
            "max_exact_field_deviation": exact_dev,
            "scale": scale,
            "tol": float(args.tol),
        }
        verdict = "PASS" if passed else "FAIL"
    else:
        # linearized covariance is only asymptotic: deviations between the
        # field t*(a + d lam) and t*a must shrink quadratically in t
        amplitudes = [0.1, 0.05, 0.025]
        deviations = []
        for t in amplitudes:
            dev_t = 0.0
            scaled = MagneticModel(kind="linearized", field=t * base_field)
            scaled_eigs = eigs_of(scaled)
            for lam in lams:
                gauged = gauge_transform(ref.net, scaled, t * lam)
                dev_t = max(dev_t, compare_spectra(scaled_eigs, eigs_of(gauged)))
            deviations.append(dev_t)
        scale = max(1.0, float(np.max(np.abs(eigs_of(MagneticModel(kind="linearized", field=base_field))))))
        if max(deviations) <= float(args.tol) * scale:
            slope = None
            passed = True
        else:
            logt = np.log(amplitudes)
            logd = np.log(np.maximum(deviations, 1e-300))
            slope = float(np.polyfit(logt, logd, 1)[0])
            passed = 1.7 <= slope <= 2.3 and deviations[0] > deviations[-1]
        report = {
            "model": "linearized",
            "count": int(args.count),
            "amplitudes": amplitudes,
            "deviations": deviations,
            "slope": slope,
            "scale": scale,
            "tol": float(args.tol),
        }
        verdict = "PASS" if passed else "FAIL"
    _write_output(_dump_json(_envelope("gauge-check", config, verdict, report)), args.output)
    return EXIT_PASS if verdict == "PASS" else EXIT_FAIL


def cmd_trace_check(args) -> int:
    s = _resolve_structure(args.structure)
    level = int(args.level)
    if level < 1:
        raise InputError("trace-check needs --level >= 1")
    config = {
        "structure": args.structure,
        "level": level,
        "tol": float(args.tol),
        "compat_tol": float(args.compat_tol),
    }
    try:
        refs = [refine(s, k) for k in range(level + 1)]
    except StructureError as exc:
        raise InputError(str(exc)) from exc

    compat = []
    all_ok = True
    for k in range(level):
        rep = verify_compatibility(s, k, tol=float(args.compat_tol))
        compat.append(
            {"level": k, "max_deviation": rep.max_deviation, "tol": rep.tol, "passed": rep.passed}
        )
        all_ok = all_ok and rep.passed

    # one-shot trace to the base vertices vs. tracing down level by level
    fine = refs[-1]
    v0_names = list(refs[0].names)
    direct_idx = [fine.name_to_index[nm] for nm in v0_names]
    direct = trace_to(fine.net, direct_idx)
    current = fine.net
    current_names = list(fine.names)
    for k in range(level - 1, -1, -1):
        lookup = {nm: i for i, nm in enumerate(current_names)}
        keep_names = list(refs[k].names)
        current = trace_to(current, [lookup[nm] for nm in keep_names])
        current_names = keep_names
    iterated_dev = conductance_deviation(direct, current)
    iterated_ok = iterated_dev <= float(args.tol)
    all_ok = all_ok and iterated_ok

    report = {
        "compatibility": compat,
        "iterated_vs_direct": {
            "max_deviation": iterated_dev,
            "tol": float(args.tol),
            "passed": iterated_ok,
        },
    }
    verdict = "PASS" if all_ok else "FAIL"
    _write_output(_dump_json(_envelope("trace-check", config, verdict, report)), args.output)
    return EXIT_PASS if all_ok else EXIT_FAIL


def cmd_hodge(args) -> int:
    s, ref, mu = _prepare(args)
    del mu  # decomposition is measure-free
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "field": args.field,
        "tol": float(args.tol),
    }
    w = _resolve_field(ref.net, args.field)
    dec = hodge_decompose(ref.net, w)
    basis = cycle_basis(ref.net)
    flux_w = cycle_fluxes(ref.net, w, basis)
    flux_coulomb = cycle_fluxes(ref.net, dec.coulomb, basis)
    flux_dev = float(np.max(np.abs(flux_w - flux_coulomb))) if len(basis.cycles) else 0.0
    scale = max(1.0, dec.total_norm_sq)
    tol = float(args.tol)
    passed = (
        dec.orthogonality_residual <= tol * scale
        and dec.pythagoras_residual <= tol * scale
        and flux_dev <= tol * max(1.0, float(np.max(np.abs(flux_w))) if len(basis.cycles) else 1.0)
    )
    report = {
        "edges": int(ref.net.edge_count),
        "cycles": len(basis.cycles),
        "exact_norm_sq": dec.exact_norm_sq,
        "coulomb_norm_sq": dec.coulomb_norm_sq,
        "total_norm_sq": dec.total_norm_sq,
        "orthogonality_residual": dec.orthogonality_residual,
        "pythagoras_residual": dec.pythagoras_residual,
        "flux_preservation_deviation": flux_dev,
        "potential": _pairs(dec.potential),
        "exact": _pairs(dec.exact),
        "coulomb": _pairs(dec.coulomb),
        "tol": tol,
    }
    verdict = "PASS" if passed else "FAIL"
    _write_output(_dump_json(_envelope("hodge", config, verdict, report)), args.output)
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_zero_mode(args) -> int:
    s, ref, mu = _prepare(args)
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "model": args.model,
        "field": args.field,
        "measure": args.measure,
        "tol": float(args.tol),
        "spread_tol": float(args.spread_tol),
        "flux_tol": float(args.flux_tol),
    }
    field = _resolve_field(ref.net, args.field)
    model = MagneticModel(kind="peierls", field=field)
    rep = zero_mode_test(
        ref.net,
        model,
        mu,
        tol=float(args.tol),
        spread_tol=float(args.spread_tol),
        flux_tol=float(args.flux_tol),
    )
    report = {
        "ground_energy": rep.ground_energy,
        "modulus_spread": rep.modulus_spread,
        "fluxes": [float(x) for x in rep.fluxes],
        "max_flux_defect": rep.max_flux_defect,
        "fluxes_integral": rep.fluxes_integral,
        "zero_mode": rep.zero_mode,
        "consistent": rep.consistent,
        "tol": rep.tol,
        "spread_tol": rep.spread_tol,
        "flux_tol": rep.flux_tol,
    }
    verdict = "PASS" if rep.consistent else "FAIL"
    _write_output(_dump_json(_envelope("zero-mode", config, verdict, report)), args.output)
    return EXIT_PASS if rep.consistent else EXIT_FAIL


def cmd_solve(args) -> int:
    s, ref, mu = _prepare(args)
    config = {
        "structure": args.structure,
        "level": int(args.level),
        "model": args.model,
        "field": args.field,
        "measure": args.measure,
        "dirichlet": args.dirichlet,
        "rhs": args.rhs,
        "tol": float(args.tol),
    }
    field = _resolve_field(ref.net, args.field)
    model = MagneticModel(kind=args.model, field=field)
    pinned = _parse_vertex_set(args.dirichlet, ref)
    rhs = _parse_rhs(args.rhs, ref.net.vertex_count)
    u = dirichlet_solve(ref.net, model, mu, pinned, rhs)

    asm = assemble(ref.net, model, mu, boundary="neumann")
    residual_vec = asm.matrix @ u - asm.mass * np.asarray(rhs, dtype=np.complex128)
    free = np.setdiff1d(np.arange(ref.net.vertex_count), np.asarray(pinned, dtype=np.intp))
    residual = float(np.max(np.abs(residual_vec[free]))) if free.size else 0.0
    scale = max(1.0, float(np.max(np.abs(asm.matrix))) * max(1.0, float(np.max(np.abs(u)))))
    passed = residual <= float(args.tol) * scale
    if args.export_matrix:
        Path(args.export_matrix).write_text(
            _dump_json(_matrix_json(asm.matrix)), encoding="utf-8"
        )
    report = {
        "dirichlet": pinned,
        "labels": [ref.names[i] for i in pinned],
        "u": _pairs(u),
        "residual": residual,
        "scale": scale,
        "tol": float(args.tol),
    }
    verdict = "PASS" if passed else "FAIL"
    _write_output(_dump_json(_envelope("solve", config, verdict, report)), args.output)
    return EXIT_PASS if passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def _add_common(p, measure_default="structure"):
    p.add_argument("--structure", required=True, help="structure JSON path or bundled name (interval, circle, gasket)")
    p.add_argument("--level", required=True, type=int, help="refinement level (>= 0)")
    p.add_argument("--measure", default=measure_default, help="per-map weights: 'structure', 'uniform', or comma-separated values (rationals like 1/3 allowed)")
    p.add_argument("--output", default=None, help="write the report to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magres",
        description="Magnetic resistance forms on refined self-similar networks.",
    )
    parser.add_argument("--version", action="version", version=f"magres {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build", help="write refined network, measure, and cell files")
    _add_common(p)
    p.add_argument("--out-dir", default=".", help="directory for the emitted files")
    p.add_argument("--prefix", default=None, help="file name prefix (default: <structure>-L<level>)")
    p.add_argument("--tol", type=float, default=1e-10, help="refinement compatibility tolerance")
    p.add_argument("--skip-check", action="store_true", help="skip the level-(n+1) compatibility check")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("spectrum", help="eigenvalues of the magnetic operator at one level")
    _add_common(p)
    p.add_argument("--model", required=True, choices=["linearized", "peierls"], help="magnetic model")
    p.add_argument("--field", default="zero", help="edge field spec: zero | constant:<t> | random:<seed> | cycle:<i>:<t>")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    p.add_argument("--k", type=int, default=None, help="report only the first k eigenvalues")
    p.add_argument("--renormalize", action="store_true", help="scale eigenvalues by (geometric mean of r)^level")
    p.add_argument("--export-matrix", default=None, help="also write the assembled matrix as JSON ([re, im] pairs, row-major)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("flux-sweep", help="spectra over a grid of fluxes through one cycle")
    _add_common(p)
    p.add_argument("--model", required=True, choices=["peierls"], help="magnetic model (flux quantization is exact only for peierls)")
    p.add_argument("--cycle", type=int, default=0, help="fundamental cycle index")
    p.add_argument("--grid", required=True, help="flux grid start:stop:count (stop inclusive)")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    p.add_argument("--k", type=int, default=None, help="keep only the first k eigenvalues per flux")
    p.add_argument("--tol", type=float, default=1e-8, help="tolerance for periodicity/symmetry row agreement")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_flux_sweep)

    p = sub.add_parser("converge", help="low eigenvalues across refinement levels")
    p.add_argument("--structure", required=True, help="structure JSON path or bundled name")
    p.add_argument("--levels", required=True, help="comma-separated ascending levels, e.g. 1,2,3,4")
    p.add_argument("--k", type=int, default=5, help="eigenvalues per level")
    p.add_argument("--model", required=True, choices=["linearized", "peierls"])
    p.add_argument("--field", default="zero", help="edge field spec (re-realized per level)")
    p.add_argument("--measure", default="structure")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    p.add_argument("--renormalize", action="store_true", help="scale level-n eigenvalues by (geometric mean of r)^n")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("audit", help="measure, Poincaré, sup-norm, and form-bound audits")
    _add_common(p)
    p.add_argument("--field", default=None, help="edge field spec (default: random:<seed>)")
    p.add_argument("--M", type=float, default=8.0, help="margin parameter; must exceed 20/3")
    p.add_argument("--trials", type=int, default=200, help="random trial functions per audit")
    p.add_argument("--seed", type=int, default=42, help="seed for balls and trial functions")
    p.add_argument("--balls", type=int, default=50, help="sampled balls for the Poincaré check")
    p.add_argument("--poincare-trials", type=int, default=5, help="random functions for the Poincaré check")
    p.add_argument("--radii", default=None, help="comma-separated radii (default: dyadic fractions of the diameter)")
    p.add_argument("--tol", type=float, default=1e-9, help="relative slack for inequality checks")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("gauge-check", help="spectral invariance under gauge transformations")
    _add_common(p)
    p.add_argument("--model", required=True, choices=["linearized", "peierls"])
    p.add_argument("--field", default=None, help="base field spec (default: random:<seed>)")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"], default="neumann")
    p.add_argument("--count", type=int, default=5, help="number of random gauge potentials")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_gauge_check)

    p = sub.add_parser("trace-check", help="Schur-trace consistency across refinement levels")
    p.add_argument("--structure", required=True, help="structure JSON path or bundled name")
    p.add_argument("--level", required=True, type=int, help="deepest level to check (>= 1)")
    p.add_argument("--tol", type=float, default=1e-9, help="iterated-vs-direct trace tolerance")
    p.add_argument("--compat-tol", type=float, default=1e-10, help="per-level compatibility tolerance")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_trace_check)

    p = sub.add_parser("hodge", help="decompose an edge field into exact and coulomb parts")
    _add_common(p)
    p.add_argument("--field", default="random:0", help="edge field spec")
    p.add_argument("--tol", type=float, default=1e-10, help="relative tolerance for the residual checks")
    p.set_defaults(func=cmd_hodge)

    p = sub.add_parser("zero-mode", help="ground-state and flux-quantization test (peierls)")
    _add_common(p)
    p.add_argument("--model", choices=["peierls"], default="peierls", help="magnetic model (the flux criterion is exact only for peierls)")
    p.add_argument("--field", default="zero", help="edge field spec")
    p.add_argument("--tol", type=float, default=1e-9, help="zero-mode energy tolerance")
    p.add_argument("--spread-tol", type=float, default=1e-6, help="ground-state modulus spread tolerance")
    p.add_argument("--flux-tol", type=float, default=1e-8, help="flux integrality tolerance")
    p.set_defaults(func=cmd_zero_mode)

    p = sub.add_parser("solve", help="magnetic Dirichlet solve with a pinned vertex set")
    _add_common(p)
    p.add_argument("--model", required=True, choices=["linearized", "peierls"])
    p.add_argument("--field", default="zero", help="edge field spec")
    p.add_argument("--dirichlet", required=True, help="pinned set: 'boundary', comma-separated indices, or a JSON file")
    p.add_argument("--rhs", required=True, help="right-hand side: delta:<i>, constant:<v>, or a JSON file")
    p.add_argument("--tol", type=float, default=1e-9, help="relative residual tolerance")
    p.add_argument("--export-matrix", default=None, help="also write the assembled matrix as JSON")
    p.set_defaults(func=cmd_solve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_INPUT
    try:
        return args.func(args)
    except (NetworkError, SpectralError) as exc:
        print(f"magres: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        print(f"magres: linear algebra failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (InputError, StructureError, json.JSONDecodeError, ValueError) as exc:
        print(f"magres: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"magres: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
