"""Command-line interface.

Subcommands::

    stability    one-period stability verdict for a lattice file
    matched      matched-envelope construction and verification
    scan         parameter scan producing a verdict/tune grid
    decompose    horizontal polar (+ normal form) of a matrix file
    normal-form  rotation normal form of a stable matrix file
    monodromy    one-period transfer matrix of a lattice file

Exit codes: 0 success/stable, 2 unstable, 3 singular envelope,
4 input error.  Reports are JSON (lossless round-trip floats); grid
artifacts are also written as CSV with 9 significant digits.
"""

import argparse
import concurrent.futures
import copy
import hashlib
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .decompositions import horizontal_polar, stable_normal_form
from .dynamics import monodromy as compute_monodromy
from .envelope import matched_envelope
from .errors import (
    EnvelopeSingularityError,
    LatticeFormatError,
    SymplecticError,
    UnstableMatrixError,
)
from .lattice import lattice_from_dict, load_lattice, load_matrix, save_matrix
from .symplectic import is_symplectic, stability_verdict

EXIT_OK = 0
EXIT_UNSTABLE = 2
EXIT_SINGULAR = 3
EXIT_INPUT = 4


@dataclass
class RunReport:
    """Structured result of one CLI invocation.

    ``payload_hash`` covers everything except the runtime, so identical
    inputs and tool version give identical hashes.
    """

    command: str
    verdict: str
    exit_code: int
    payload: dict
    config_hash: str = ""
    runtime_seconds: float = 0.0
    tool_version: str = __version__

    def to_dict(self):
        return {
            "command": self.command,
            "verdict": self.verdict,
            "exit_code": self.exit_code,
            "config_hash": self.config_hash,
            "payload": self.payload,
            "runtime_seconds": self.runtime_seconds,
            "tool_version": self.tool_version,
            "payload_hash": self.payload_hash(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            command=data["command"],
            verdict=data["verdict"],
            exit_code=data["exit_code"],
            payload=data["payload"],
            config_hash=data.get("config_hash", ""),
            runtime_seconds=data.get("runtime_seconds", 0.0),
            tool_version=data.get("tool_version", __version__),
        )

    def payload_hash(self):
        body = json.dumps(
            [self.command, self.verdict, self.exit_code, self.config_hash,
             self.payload, self.tool_version],
            sort_keys=True,
        )
        return hashlib.sha256(body.encode()).hexdigest()

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _matrix_payload(mat):
    return [[float(x) for x in row] for row in np.asarray(mat)]


def _report_stability(report):
    return {
        "stable": report.stable,
        "max_modulus": report.max_modulus,
        "eigenvalues": [[z.real, z.imag] for z in report.eigenvalues],
        "groups": report.to_dict()["groups"],
        "offenders": list(report.offenders),
    }


def _tolerances(config, args):
    tol = dict(config.tolerances) if config is not None else {}
    out = {
        "integ_tol": tol.get("integ_tol", 1e-9),
        "match_tol": tol.get("match_tol", 1e-6),
        "stability_tol": tol.get("stability_tol", 1e-8),
        "symp_tol": tol.get("symp_tol", 1e-8),
    }
    if getattr(args, "tol", None) is not None:
        out["stability_tol"] = args.tol
        out["symp_tol"] = args.tol
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def run_stability(config, stability_tol=1e-8, integ_tol=1e-9,
                  steps_per_period=4096):
    h = config.to_hamiltonian()
    mon = compute_monodromy(h, steps_per_period=steps_per_period,
                            integ_tol=integ_tol)
    report = stability_verdict(mon.matrix, tol=stability_tol)
    payload = {
        "lattice": config.name,
        "n": config.dim_n,
        "period": config.period,
        "monodromy_symplectic_residual": mon.symplectic_residual,
        "stability": _report_stability(report),
        "krein_types": [
            {"eigenvalue": [g.value.real, g.value.imag],
             "type": list(g.krein_type) if g.krein_type else None}
            for g in report.groups
        ],
    }
    verdict = "stable" if report.stable else "unstable"
    code = EXIT_OK if report.stable else EXIT_UNSTABLE
    return RunReport(command="stability", verdict=verdict, exit_code=code,
                     payload=payload, config_hash=config.content_hash())


def run_matched(config, stability_tol=1e-8, integ_tol=1e-9, match_tol=1e-6,
                steps_per_period=4096):
    h = config.to_hamiltonian()
    matched = matched_envelope(
        h, steps_per_period=steps_per_period, match_tol=match_tol,
        stability_tol=stability_tol, integ_tol=integ_tol,
    )
    payload = {
        "lattice": config.name,
        "n": config.dim_n,
        "w0": _matrix_payload(matched.initial.w),
        "w0_dot": _matrix_payload(matched.initial.w_dot),
        "envelope_modulus_residual": matched.envelope_modulus_residual,
        "transform_symplectic_residual":
            matched.transform_symplectic_residual,
        "match_tol": matched.match_tol,
        "accepted": matched.accepted,
        "angles": [float(a) for a in matched.normal_form.angles],
        "fractional_tunes": [float(a / (2 * np.pi))
                             for a in matched.normal_form.angles],
    }
    verdict = "matched" if matched.accepted else "residual_above_tolerance"
    code = EXIT_OK if matched.accepted else EXIT_SINGULAR
    return RunReport(command="matched", verdict=verdict, exit_code=code,
                     payload=payload, config_hash=config.content_hash())


def _set_by_path(data, path, value):
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        node = node[int(key)] if isinstance(node, list) else node[key]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        if last not in node:
            raise KeyError(last)
        node[last] = value


def _get_by_path(data, path):
    node = data
    for key in path.split("."):
        node = node[int(key)] if isinstance(node, list) else node[key]
    return node


def _scan_cell(task):
    """One scan cell: apply overrides, rebuild, classify.  Top-level so
    process pools can pickle it."""
    base, overrides, opts = task
    data = copy.deepcopy(base)
    for path, value in overrides:
        _set_by_path(data, path, value)
    try:
        config = lattice_from_dict(data, where="scan cell")
        h = config.to_hamiltonian()
        mon = compute_monodromy(h, steps_per_period=opts["steps_per_period"],
                                integ_tol=opts["integ_tol"])
        report = stability_verdict(mon.matrix, tol=opts["stability_tol"])
        tunes = []
        if report.stable:
            nf = stable_normal_form(mon.matrix, tol=opts["stability_tol"])
            tunes = [float(a / (2 * np.pi)) for a in nf.angles]
        trace = float(np.trace(mon.matrix)) if config.dim_n == 1 else None
        return {
            "stable": report.stable,
            "max_modulus": report.max_modulus,
            "trace": trace,
            "tunes": tunes,
            "error": None,
        }
    except Exception as exc:  # recorded per cell, scan keeps going
        return {"stable": None, "max_modulus": None, "trace": None,
                "tunes": [], "error": f"{type(exc).__name__}: {exc}"}


def _parse_param(spec):
    try:
        path, rng = spec.split("=", 1)
        start, stop, count = rng.split(":")
        return path.strip(), float(start), float(stop), int(count)
    except ValueError:
        raise LatticeFormatError(
            f"bad --param {spec!r}; expected path=start:stop:count"
        )


def run_scan(config, params, workers=1, stability_tol=1e-8, integ_tol=1e-9,
             steps_per_period=4096):
    """Grid scan over one or two numeric config fields."""
    if not 1 <= len(params) <= 2:
        raise LatticeFormatError("scan needs one or two --param specifications")
    base = config.to_dict()
    axes = []
    for spec in params:
        path, start, stop, count = _parse_param(spec)
        try:
            _get_by_path(base, path)
        except (KeyError, IndexError, TypeError, ValueError):
            raise LatticeFormatError(f"unknown parameter path {path!r}")
        if count < 1:
            raise LatticeFormatError(f"parameter count must be >= 1 in {spec!r}")
        axes.append((path, np.linspace(start, stop, count)))

    if len(axes) == 1:
        cells = [((i,), [(axes[0][0], float(axes[0][1][i]))])
                 for i in range(axes[0][1].size)]
    else:
        cells = [
            ((i, j), [(axes[0][0], float(axes[0][1][i])),
                      (axes[1][0], float(axes[1][1][j]))])
            for i in range(axes[0][1].size)
            for j in range(axes[1][1].size)
        ]
    opts = {"stability_tol": stability_tol, "integ_tol": integ_tol,
            "steps_per_period": steps_per_period}
    tasks = [(base, overrides, opts) for _, overrides in cells]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_scan_cell, tasks, chunksize=8))
    else:
        results = [_scan_cell(t) for t in tasks]

    rows = []
    for (index, overrides), result in zip(cells, results):
        row = {"index": list(index)}
        for path, value in overrides:
            row[path] = value
        row.update(result)
        rows.append(row)
    payload = {
        "lattice": config.name,
        "axes": [{"path": p, "values": [float(v) for v in vals]}
                 for p, vals in axes],
        "cells": rows,
        "stable_count": sum(1 for r in rows if r["stable"]),
        "error_count": sum(1 for r in rows if r["error"]),
    }
    return RunReport(command="scan", verdict="ok", exit_code=EXIT_OK,
                     payload=payload, config_hash=config.content_hash())


def run_decompose(matrix, symp_tol=1e-8, stability_tol=1e-8):
    """Horizontal polar factors, plus the normal form when stable."""
    check = is_symplectic(matrix, symp_tol)
    if not check:
        raise SymplecticError(
            f"input matrix is not symplectic (residual {check.residual:.3e})",
            residual=check.residual,
        )
    parts = horizontal_polar(matrix, symp_tol=symp_tol)
    recon = np.linalg.norm(parts.assemble() - matrix) / (
        1.0 + np.linalg.norm(matrix))
    payload = {
        "n": parts.n,
        "symplectic_residual": check.residual,
        "x": _matrix_payload(parts.x),
        "y": _matrix_payload(parts.y),
        "l": _matrix_payload(parts.l),
        "q": _matrix_payload(parts.q),
        "reconstruction_residual": float(recon),
    }
    report = stability_verdict(matrix, tol=stability_tol, symp_tol=symp_tol)
    payload["stability"] = _report_stability(report)
    verdict = "decomposed"
    if report.stable:
        nf = stable_normal_form(matrix, tol=stability_tol)
        payload["normal_form"] = {
            "angles": [float(a) for a in nf.angles],
            "conjugator": _matrix_payload(nf.conjugator),
            "eigen_types": [list(t) for t in nf.eigen_types],
            "reconstruction_residual": nf.reconstruction_residual,
        }
    else:
        payload["normal_form"] = None
        verdict = "decomposed_polar_only"
    return RunReport(command="decompose", verdict=verdict, exit_code=EXIT_OK,
                     payload=payload)


def run_normal_form(matrix, symp_tol=1e-8, stability_tol=1e-8):
    nf = stable_normal_form(matrix, tol=stability_tol)
    payload = {
        "n": nf.n,
        "angles": [float(a) for a in nf.angles],
        "fractional_tunes": [float(a / (2 * np.pi)) for a in nf.angles],
        "eigen_types": [list(t) for t in nf.eigen_types],
        "conjugator": _matrix_payload(nf.conjugator),
        "reconstruction_residual": nf.reconstruction_residual,
    }
    return RunReport(command="normal-form", verdict="ok", exit_code=EXIT_OK,
                     payload=payload)


def run_monodromy(config, integ_tol=1e-9, steps_per_period=4096):
    h = config.to_hamiltonian()
    mon = compute_monodromy(h, steps_per_period=steps_per_period,
                            integ_tol=integ_tol, error_estimate=True)
    payload = {
        "lattice": config.name,
        "n": config.dim_n,
        "period": config.period,
        "matrix": _matrix_payload(mon.matrix),
        "method": mon.method,
        "steps": mon.steps,
        "symplectic_residual": mon.symplectic_residual,
        "error_estimate": mon.error_estimate,
        "eigenvalues": [[z.real, z.imag]
                        for z in np.linalg.eigvals(mon.matrix)],
    }
    return RunReport(command="monodromy", verdict="ok", exit_code=EXIT_OK,
                     payload=payload, config_hash=config.content_hash())


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, list):
        return ";".join(f"{v:.9g}" for v in value)
    return str(value)


def scan_csv_lines(report):
    """Deterministic CSV rendering of a scan grid (9 digit summaries)."""
    axes = [ax["path"] for ax in report.payload["axes"]]
    header = (["i", "j"][: len(axes)] + axes
              + ["stable", "max_modulus", "trace", "tunes", "error"])
    lines = [",".join(header)]
    for row in report.payload["cells"]:
        cells = [str(k) for k in row["index"]]
        cells += [_csv_cell(row[a]) for a in axes]
        cells += [
            _csv_cell(row["stable"]),
            _csv_cell(row["max_modulus"]),
            _csv_cell(row["trace"]),
            _csv_cell(row["tunes"]),
            _csv_cell(row["error"]),
        ]
        lines.append(",".join(cells))
    return lines


def _write_outputs(report, args):
    out_dir = getattr(args, "out", None)
    fmt = getattr(args, "format", "json")
    if out_dir is not None:
        import os
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, report.command.replace("-", "_"))
        with open(base + "_report.json", "w") as fh:
            fh.write(report.to_json() + "\n")
        if report.command == "scan":
            with open(base + "_grid.csv", "w") as fh:
                fh.write("\n".join(scan_csv_lines(report)) + "\n")
        if report.command == "monodromy":
            save_matrix(np.array(report.payload["matrix"]),
                        base + "_matrix.txt")
    if fmt == "json":
        print(report.to_json())
    else:
        if report.command == "scan":
            print("\n".join(scan_csv_lines(report)))
        else:
            for key, value in sorted(report.payload.items()):
                if isinstance(value, (int, str, bool)) or value is None:
                    print(f"{key},{value}")
                elif isinstance(value, float):
                    print(f"{key},{value:.9g}")
        print(f"verdict,{report.verdict}")


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(parser, config=True):
    if config:
        parser.add_argument("--config", required=True,
                            help="lattice YAML file")
    parser.add_argument("--out", default=None,
                        help="directory for report artifacts")
    parser.add_argument("--format", choices=("csv", "json"), default="json",
                        help="stdout rendering (files always get JSON)")
    parser.add_argument("--tol", type=float, default=None,
                        help="override the stability/symplecticity tolerance")
    parser.add_argument("--steps", type=int, default=4096,
                        help="integrator steps per period (default 4096)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sympenv",
        description="Stability tools for linear Hamiltonian systems with "
                    "periodic coefficients",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability", help="one-period stability verdict")
    _add_common(p)

    p = sub.add_parser("matched", help="matched-envelope construction")
    _add_common(p)

    p = sub.add_parser("scan", help="parameter scan")
    _add_common(p)
    p.add_argument("--param", action="append", required=True,
                   help="path=start:stop:count (repeat for a 2-d grid)")
    p.add_argument("--workers", type=int, default=1,
                   help="concurrent scan workers")

    p = sub.add_parser("decompose", help="horizontal polar decomposition")
    _add_common(p, config=False)
    p.add_argument("--matrix", required=True, help="matrix text file")

    p = sub.add_parser("normal-form", help="stable rotation normal form")
    _add_common(p, config=False)
    p.add_argument("--matrix", required=True, help="matrix text file")

    p = sub.add_parser("monodromy", help="one-period transfer matrix")
    _add_common(p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command in ("stability", "matched", "scan", "monodromy"):
            config = load_lattice(args.config)
            tols = _tolerances(config, args)
            if args.command == "stability":
                report = run_stability(
                    config, stability_tol=tols["stability_tol"],
                    integ_tol=tols["integ_tol"], steps_per_period=args.steps)
            elif args.command == "matched":
                report = run_matched(
                    config, stability_tol=tols["stability_tol"],
                    integ_tol=tols["integ_tol"], match_tol=tols["match_tol"],
                    steps_per_period=args.steps)
            elif args.command == "scan":
                report = run_scan(
                    config, args.param, workers=args.workers,
                    stability_tol=tols["stability_tol"],
                    integ_tol=tols["integ_tol"], steps_per_period=args.steps)
            else:
                report = run_monodromy(
                    config, integ_tol=tols["integ_tol"],
                    steps_per_period=args.steps)
        else:
            matrix = load_matrix(args.matrix)
            tols = _tolerances(None, args)
            if args.command == "decompose":
                report = run_decompose(matrix, symp_tol=tols["symp_tol"],
                                       stability_tol=tols["stability_tol"])
            else:
                report = run_normal_form(matrix, symp_tol=tols["symp_tol"],
                                         stability_tol=tols["stability_tol"])
    except UnstableMatrixError as exc:
        report = RunReport(
            command=args.command, verdict="unstable",
            exit_code=EXIT_UNSTABLE,
            payload={
                "error": str(exc),
                "stability": _report_stability(exc.report)
                if exc.report is not None else None,
            },
        )
        report.runtime_seconds = time.perf_counter() - t0
        _write_outputs(report, args)
        return EXIT_UNSTABLE
    except EnvelopeSingularityError as exc:
        report = RunReport(
            command=args.command, verdict="singular_envelope",
            exit_code=EXIT_SINGULAR,
            payload={"error": str(exc), "t_lo": exc.t_lo, "t_hi": exc.t_hi},
        )
        report.runtime_seconds = time.perf_counter() - t0
        _write_outputs(report, args)
        return EXIT_SINGULAR
    except (LatticeFormatError, SymplecticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report.runtime_seconds = time.perf_counter() - t0
    _write_outputs(report, args)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
