"""Command-line front end.

Subcommands: ``solve`` (spectrum report), ``gram`` (orthogonality report),
``sumrule`` (completeness partial-sum sweep), ``evolve`` (modal vs direct
time evolution), ``perturb`` (eigenvalue shifts vs exact re-solve).

Reports are deterministic: fields are emitted in a fixed order and every
float is printed with 17 significant digits, so identical configs and
model files produce byte-identical output.  Each report embeds the tool
version, the SHA-256 of the model file, and the full configuration.
QNM_THREADS (default 1) caps worker counts; all built-in pipelines run
sequentially, so any cap is honoured trivially.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import __version__
from .biorthogonal import gram_matrix, normalize_mode, sum_rule_residuals
from .dynamics import (
    compare_evolutions,
    evolve_fdtd,
    evolve_qnm,
    gaussian_profile,
)
from .errors import ModelError, QnmError
from .model import load_model, state_from_callables, state_on_uniform_grid
from .perturb import (
    PerturbationSpec,
    exact_shift_oracle,
    first_order_shift,
    second_order_shift,
)
from .spectrum import SearchRegion, characteristic, close_conjugate, find_modes


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if x is None:
        return "null"
    raise TypeError(f"unsupported scalar {x!r}")


def dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON writer: insertion order kept, floats at 17 digits."""
    pad = "  " * indent
    pad_in = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad_in}"{k}": {dumps(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad_in}{dumps(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return _fmt(obj)


def _threads() -> int:
    raw = os.environ.get("QNM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ModelError(f"QNM_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ModelError("QNM_THREADS must be >= 1")
    return n


def _report_envelope(args, command: str) -> dict:
    with open(args.model, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    config = {k: (list(v) if isinstance(v, tuple) else v)
              for k, v in config.items()}
    return {
        "tool": "qnm1d",
        "version": __version__,
        "command": command,
        "model_sha256": digest,
        "threads": _threads(),
        "config": config,
    }


def _write(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _region(args) -> SearchRegion:
    return SearchRegion(re_min=args.re_min, re_max=args.re_max,
                        im_min=args.im_min, im_max=args.im_max, tol=args.tol)


def _solved_modes(model, args, n_modes=None):
    modes = find_modes(model, _region(args))
    modes = [normalize_mode(m, model) for m in modes]
    if n_modes is not None:
        modes = modes[:n_modes]
    return modes


def _mode_rows(model, modes):
    rows = []
    for m in modes:
        w, dw = characteristic(model, m.omega)
        residual = abs(w) / max(abs(dw), 1e-300)
        rows.append({"re_omega": m.omega.real, "im_omega": m.omega.imag,
                     "residual": residual})
    return rows


def cmd_solve(args) -> int:
    model = load_model(args.model)
    modes = _solved_modes(model, args, args.n_modes)
    rows = _mode_rows(model, modes)
    if args.format == "csv":
        lines = ["re_omega,im_omega,residual"]
        lines += [f"{_fmt(r['re_omega'])},{_fmt(r['im_omega'])},"
                  f"{_fmt(r['residual'])}" for r in rows]
        _write(args, "\n".join(lines))
    else:
        report = _report_envelope(args, "solve")
        report["modes"] = rows
        _write(args, dumps(report))
    return 0


def cmd_gram(args) -> int:
    model = load_model(args.model)
    modes = _solved_modes(model, args, args.n_modes)
    rep = gram_matrix(modes, model)
    if args.format == "csv":
        idx = list(range(len(modes)))
        lines = ["index," + ",".join(str(i) for i in idx)]
        for i in idx:
            cells = [f"{_fmt(rep.gram[i, j].real)}"
                     f"{rep.gram[i, j].imag:+.17g}j" for j in idx]
            lines.append(f"{i}," + ",".join(cells))
        _write(args, "\n".join(lines))
    else:
        report = _report_envelope(args, "gram")
        report["modes"] = [{"index": i, "re_omega": w.real, "im_omega": w.imag}
                           for i, w in enumerate(rep.omegas)]
        report["gram_re"] = [[rep.gram[i, j].real for j in range(len(modes))]
                             for i in range(len(modes))]
        report["gram_im"] = [[rep.gram[i, j].imag for j in range(len(modes))]
                             for i in range(len(modes))]
        report["offdiag_max"] = rep.offdiag_max
        _write(args, dumps(report))
    print(f"offdiag_max = {rep.offdiag_max:.3e}", file=sys.stderr)
    return 0


def cmd_sumrule(args) -> int:
    model = load_model(args.model)
    modes = close_conjugate(_solved_modes(model, args))
    modes.sort(key=lambda m: (abs(m.omega.real), m.omega.imag))
    testwidth = args.testwidth if args.testwidth else 0.1 * model.a
    table = []
    for n in range(2, min(args.max_modes, len(modes)) + 1, 2):
        s1, s2 = sum_rule_residuals(modes[:n], args.x, args.y, testwidth,
                                    model)
        table.append({"n_modes": n, "abs_s1": abs(s1), "abs_s2": abs(s2),
                      "re_s1": s1.real, "im_s1": s1.imag,
                      "re_s2": s2.real, "im_s2": s2.imag})
    if args.format == "csv":
        lines = ["n_modes,abs_s1,abs_s2,re_s1,im_s1,re_s2,im_s2"]
        lines += [",".join([str(r["n_modes"])]
                           + [_fmt(r[k]) for k in
                              ("abs_s1", "abs_s2", "re_s1", "im_s1",
                               "re_s2", "im_s2")]) for r in table]
        _write(args, "\n".join(lines))
    else:
        report = _report_envelope(args, "sumrule")
        report["x"] = args.x
        report["y"] = args.y
        report["testwidth"] = testwidth
        report["table"] = table
        _write(args, dumps(report))
    return 0


def cmd_evolve(args) -> int:
    model = load_model(args.model)
    a = model.a
    t_end = args.t_end if args.t_end else 6.0 * a
    dx = args.dx if args.dx else a / 2000.0
    center = args.pulse_center if args.pulse_center else 0.5 * a
    width = args.pulse_width if args.pulse_width else 0.1 * a
    pulse = gaussian_profile(center, width)
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))

    modes = close_conjugate(_solved_modes(model, args))
    modes.sort(key=lambda m: (abs(m.omega.real), m.omega.imag))
    modes = modes[:args.n_modes]

    record = np.linspace(a, t_end, args.frames)
    fdtd = evolve_fdtd(state_on_uniform_grid(model, dx, pulse, zero),
                       model, t_end, dx, record_times=record)
    state0 = state_from_callables(model, pulse, zero,
                                  panels_per_segment=args.panels)
    modal = evolve_qnm(state0, modes, record, model, grid=fdtd.grid)
    errors = compare_evolutions(modal, fdtd)
    if args.format == "csv":
        lines = ["t,x,re_phi,im_phi,re_phi_hat,im_phi_hat"]
        for t, st in zip(fdtd.times, fdtd.states):
            for x, p, ph in zip(st.grid, st.phi, st.phi_hat):
                lines.append(",".join(_fmt(float(v)) for v in
                                      (t, x, p.real, p.imag,
                                       ph.real, ph.imag)))
        _write(args, "\n".join(lines))
    else:
        report = _report_envelope(args, "evolve")
        report["n_modes"] = len(modes)
        report["dx"] = dx
        report["t_end"] = t_end
        report["window"] = [a, t_end]
        report["max_rel_error"] = max(e for _, e in errors)
        report["imag_residual"] = modal.imag_residual
        report["errors"] = [{"t": t, "rel_error": e} for t, e in errors]
        _write(args, dumps(report))
    return 0


def cmd_perturb(args) -> int:
    model = load_model(args.model)
    modes = close_conjugate(_solved_modes(model, args))
    modes.sort(key=lambda m: (abs(m.omega.real), m.omega.imag))
    idx = args.mode_index
    if idx >= len(modes):
        raise ModelError(f"mode index {idx} out of range ({len(modes)} found)")
    mus = list(args.mu) if args.mu else [1e-2, 1e-3, 1e-4]
    base = PerturbationSpec.from_pieces(
        [(args.v_left, args.v_right, args.v_value)], mus[0], model.a)
    first = first_order_shift(idx, modes, base, model)
    second = second_order_shift(idx, modes, base, model, args.truncation)
    omega0 = modes[idx].omega
    exact = []
    scaling = []
    for mu in mus:
        spec = PerturbationSpec.from_pieces(base.pieces, mu, model.a)
        w = exact_shift_oracle(idx, modes, spec, model)
        exact.append({"mu": mu, "re_omega": w.real, "im_omega": w.imag})
        resid = w - omega0 - mu * first
        scaling.append({"mu": mu,
                        "abs_residual_over_mu2": abs(resid) / mu ** 2})
    if args.format == "csv":
        lines = ["mu,re_omega,im_omega"]
        lines += [f"{_fmt(r['mu'])},{_fmt(r['re_omega'])},"
                  f"{_fmt(r['im_omega'])}" for r in exact]
        _write(args, "\n".join(lines))
    else:
        report = _report_envelope(args, "perturb")
        report["mode_index"] = idx
        report["omega0"] = {"re": omega0.real, "im": omega0.imag}
        report["first_order"] = {"re": first.real, "im": first.imag}
        report["second_order"] = {"re": second.real, "im": second.imag}
        report["exact"] = exact
        report["residual_scaling"] = scaling
        _write(args, dumps(report))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--re-min", type=float, default=1e-3)
    p.add_argument("--re-max", type=float, default=20.0)
    p.add_argument("--im-min", type=float, default=-2.0)
    p.add_argument("--im-max", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnm1d",
                                 description="quasinormal modes of 1-D "
                                             "open cavities")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="find modes and write a spectrum report")
    _add_common(p)
    p.add_argument("--n-modes", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gram", help="pairwise bilinear products of the modes")
    _add_common(p)
    p.add_argument("--n-modes", type=int, default=10)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("sumrule", help="completeness partial-sum sweep")
    _add_common(p)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--testwidth", type=float, default=None,
                   help="FWHM of the smearing Gaussian (default 0.1 a)")
    p.add_argument("--max-modes", type=int, default=50)
    p.set_defaults(func=cmd_sumrule)

    p = sub.add_parser("evolve", help="modal vs direct evolution comparison")
    _add_common(p)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dx", type=float, default=None)
    p.add_argument("--n-modes", type=int, default=30)
    p.add_argument("--frames", type=int, default=61)
    p.add_argument("--panels", type=int, default=32)
    p.add_argument("--pulse-center", type=float, default=None)
    p.add_argument("--pulse-width", type=float, default=None,
                   help="standard deviation of the initial Gaussian")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("perturb", help="eigenvalue shifts vs exact re-solve")
    _add_common(p)
    p.add_argument("--mode-index", type=int, default=0)
    p.add_argument("--mu", type=float, action="append", default=None,
                   help="repeatable; default 1e-2 1e-3 1e-4")
    p.add_argument("--v-left", type=float, default=0.2)
    p.add_argument("--v-right", type=float, default=0.4)
    p.add_argument("--v-value", type=float, default=1.0)
    p.add_argument("--n-modes", type=int, default=40)
    p.add_argument("--truncation", type=int, default=40)
    p.set_defaults(func=cmd_perturb)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QnmError as exc:
        name = type(exc).__name__
        print(f"numerical failure: {name}: {exc}", file=sys.stderr)
        if getattr(args, "out", None):
            try:
                report = _report_envelope(args, args.command)
                report["error"] = name
                report["message"] = str(exc)
                _write(args, dumps(report))
            except OSError:
                pass
        return 3


if __name__ == "__main__":
    sys.exit(main())
