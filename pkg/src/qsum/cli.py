"""Batch front end: problem ingestion, pipeline driving, artifact emission.

Commands: ``validate``, ``solve``, ``verify``, ``sum``, ``transform``.  Exit
codes are fixed for CI use: 0 ok, 1 verification failure, 2 invalid problem
file, 3 numeric regime failure (no contraction, bad direction, stalled
quadrature), 64 usage error.

Problem files are JSON validated against the shipped schema; bare names are
resolved against ``QSUM_DATA_DIR`` and then the packaged fixtures.  Every
output file references the run manifest by id; the id hashes the manifest
with its timestamp removed, so reruns on identical inputs give identical
ids and byte-identical numeric artifacts.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import importlib.resources
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from jsonschema import validate as _schema_validate
from jsonschema.exceptions import ValidationError as SchemaError

from . import __version__
from .errors import (
    BadDirection,
    DivergentInversion,
    DomainTooLarge,
    NoContraction,
    QsumError,
    SmallDelta,
    StripViolation,
    ValidationError,
)
from .fourier import FourierFn, inverse_fourier_eval, inverse_fourier_table, make_space
from .geometry import (
    ForcingTerm,
    MahlerTerm,
    ProblemSpec,
    pm_lower_bound_report,
    select_sector,
    validate_spec,
)
from .qcore import CoveringPoint, QParams, theta_kernel_log
from .series import borel_exponent
from .solver import assemble_U_hat, assemble_u_hat, solve_fixed_point
from .transforms import (
    ContinuedOmega,
    deceleration_integral,
    fit_log_quadratic,
    gq_sum,
    q_borel_analytic,
    q_laplace,
    ray_window,
    theorem2_residual,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_SPEC = 2
EXIT_REGIME = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which collides with the invalid-spec
    # code; the CI contract wants 64
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# problem files


def _package_file(*parts) -> Path | None:
    node = importlib.resources.files("qsum")
    for p in parts:
        node = node / p
    return node if node.is_file() else None


def resolve_input(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    root = os.environ.get("QSUM_DATA_DIR")
    if root:
        cand = Path(root) / name
        if cand.is_file():
            return cand
    pk = _package_file("fixtures", name)
    if pk is not None:
        return pk
    raise ValidationError(f"cannot resolve input file {name!r}")


def _load_schema(name: str) -> dict:
    pk = _package_file("schemas", name)
    if pk is None:
        raise ValidationError(f"missing packaged schema {name!r}")
    return json.loads(pk.read_text())


def _parse_profile(node: dict, space) -> FourierFn:
    if node["kind"] == "gaussian":
        scale = float(node["scale"])
        center = float(node.get("center", 0.0))
        return FourierFn.from_callable(
            space, lambda m: scale * np.exp(-((m - center) ** 2) / 2.0)
        )
    re = np.asarray(node["re"], dtype=float)
    im = np.asarray(node.get("im", np.zeros_like(re)), dtype=float)
    if re.size != space.size:
        raise ValidationError(
            f"profile has {re.size} samples for a grid of {space.size}"
        )
    return FourierFn(space, re + 1j * im)


def load_problem(name: str) -> tuple[dict, ProblemSpec, str]:
    """Resolve, parse, schema-check and construct; returns (raw, spec, hash)."""
    path = resolve_input(name)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    try:
        _schema_validate(raw, _load_schema("problem_spec.schema.json"))
    except SchemaError as exc:
        raise ValidationError(f"{path}: schema violation: {exc.message}") from exc

    sp = raw["space"]
    space = make_space(
        float(sp["beta"]),
        float(sp["mu"]),
        half_width=sp.get("half_width"),
        n_points=sp.get("n_points"),
    )
    params = QParams(q=float(raw["params"]["q"]), k=int(raw["params"]["k"]))
    terms = tuple(
        MahlerTerm(
            l0=t["l0"], l1=t["l1"], l2=t["l2"], R=t["R"], A=_parse_profile(t["A"], space)
        )
        for t in raw.get("terms", [])
    )
    forcing = tuple(
        ForcingTerm(j=f["j"], F=_parse_profile(f["F"], space))
        for f in raw.get("forcing", [])
    )
    spec = ProblemSpec(
        Q=raw["Q"],
        R_D=raw["R_D"],
        alpha_D=float(raw["alpha_D"]),
        d_D=int(raw["d_D"]),
        terms=terms,
        forcing=forcing,
        params=params,
        space=space,
    )
    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return raw, spec, digest


# ---------------------------------------------------------------------------
# manifests and artifact writers


def _canonical_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def make_manifest(command: str, spec_hash: str, args, config=None, outcome=None) -> dict:
    quad = {
        "tail": getattr(args, "tail", None),
        "eps_rel": getattr(args, "eps_rel", None),
        "refinement": "node doubling splits gain between step/sqrt(2) and window*sqrt(2)",
        "contour_orientation": "covering angle increasing; sign fixed by the monomial oracle",
    }
    manifest = {
        "tool": "qsum",
        "version": __version__,
        "command": command,
        "spec_hash": spec_hash,
        "config": _config_jsonable(config) if config is not None else None,
        "quadrature": quad,
        "threads": getattr(args, "_thread_info", None),
        "seed": getattr(args, "seed", None),
        "outcome": outcome or {},
    }
    manifest["manifest_id"] = _canonical_hash(manifest)[:16]
    manifest["timestamp"] = (
        datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    )
    return manifest


def _config_jsonable(cfg) -> dict:
    return {
        "d": cfg.d,
        "half_opening": cfg.half_opening,
        "rho": cfg.rho,
        "R": cfg.R,
        "alpha_tilde_D": cfg.alpha_tilde_D,
        "delta1": cfg.delta1,
        "envelope": {
            "K0": cfg.envelope.K0,
            "K1": cfg.envelope.K1,
            "C0": cfg.envelope.C0,
            "epsilon": cfg.envelope.epsilon,
            "theta_excl": cfg.envelope.theta_excl,
        },
    }


def _complex_rows(arr: np.ndarray) -> dict:
    return {"re": arr.real.tolist(), "im": arr.imag.tolist()}


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def write_csv(path: Path, manifest_id: str, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest: {manifest_id}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(c) for c in row])


def _cell(c):
    if isinstance(c, float):
        return repr(c)
    return c


def _emit_rows(args, out: Path | None, manifest: dict, header, rows, stem: str):
    """Witness/value table in the chosen format, plus the manifest file."""
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        payload = {
            "manifest": manifest["manifest_id"],
            "rows": [dict(zip(header, [_cell(c) for c in row])) for row in rows],
        }
        write_json(out / f"{stem}.json", payload)
    else:
        write_csv(out / f"{stem}.csv", manifest["manifest_id"], header, rows)
    write_json(out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    _, spec, digest = load_problem(args.spec_file)
    report = validate_spec(spec)
    manifest = make_manifest(
        "validate",
        digest,
        args,
        outcome={"ok": report.ok, "failures": len(report.failures())},
    )
    header = ["condition", "status", "detail"]
    rows = [(c.name, "pass" if c.ok else "FAIL", c.detail) for c in report.conditions]
    for name, status, detail in rows:
        print(f"{status:>4}  {name}: {detail}")
    print(f"ratio corridor [{report.ratio_min:.6g}, {report.ratio_max:.6g}]")
    _emit_rows(args, args.out, manifest, header, rows, "validation")
    return EXIT_OK if report.ok else EXIT_SPEC


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    if args.order < 1:
        raise UsageError("--order must be a positive integer")
    _, spec, digest = load_problem(args.spec_file)
    report = validate_spec(spec)
    if not report.ok:
        for c in report.failures():
            print(f"FAIL  {c.name}: {c.detail}", file=sys.stderr)
        return EXIT_SPEC
    cfg = select_sector(spec, args.direction)
    mode = "contraction"
    try:
        sol = solve_fixed_point(spec, cfg, args.order, tol=args.tol)
    except NoContraction as exc:
        if not args.force_triangular:
            print(f"no contraction: {exc}", file=sys.stderr)
            return EXIT_REGIME
        mode = "triangular"
        sol = solve_fixed_point(spec, cfg, args.order, tol=args.tol, mode="triangular")

    U = assemble_U_hat(sol, spec.params)
    z_pts = np.linspace(-1.0, 1.0, args.z_points) + 0.0j
    beta_prime = args.beta_prime if args.beta_prime is not None else 0.5 * spec.space.beta
    table = assemble_u_hat(U, z_pts, beta_prime)

    outcome = {
        "mode": mode,
        "iterations": sol.iterations,
        "residual_1R": sol.residual_1R,
        "contraction_max": max(sol.contraction_history, default=0.0),
    }
    manifest = make_manifest("solve", digest, args, config=cfg, outcome=outcome)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    mid = manifest["manifest_id"]

    write_json(out / "omega.json", {
        "manifest": mid,
        "order": sol.omega.order,
        "grid_size": spec.space.size,
        "coeffs": _complex_rows(sol.omega.coeffs),
    })
    write_json(out / "U_hat.json", {
        "manifest": mid,
        "order": U.order,
        "grid_size": spec.space.size,
        "coeffs": _complex_rows(U.coeffs),
    })
    rows = []
    for n in range(table.shape[0]):
        for j, z in enumerate(z_pts):
            rows.append((n + 1, float(z.real), float(z.imag),
                         float(table[n, j].real), float(table[n, j].imag)))
    write_csv(out / "u_hat.csv", mid, ["order", "z_re", "z_im", "re", "im"], rows)
    write_json(out / "report.json", {
        "manifest": mid,
        "mode": mode,
        "iterations": sol.iterations,
        "contraction_history": list(sol.contraction_history),
        "residual_1R": sol.residual_1R,
        "dropped_mass_1R": sol.dropped_mass_1R,
        "R": sol.R,
    })
    write_json(out / "manifest.json", manifest)
    print(f"solved order {sol.omega.order} in {sol.iterations} iterations "
          f"({mode}); residual {sol.residual_1R:.3e}; artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites


def _suite_identities(spec, cfg, rng):
    P = spec.params
    rows = []

    def pt(r_lo, r_hi):
        return CoveringPoint(float(rng.uniform(r_lo, r_hi)), float(rng.uniform(-1.5, 1.5)))

    for n in range(1, 5):
        T = pt(0.05, 0.15)
        want = P.q ** float(borel_exponent(n, P.k)) * (T.r ** n) * np.exp(1j * n * T.theta)
        got = q_laplace(lambda u, n=n: u**n, T, params=P, growth=float(n))
        err = abs(got - want) / abs(want)
        rows.append(("laplace-monomial", f"n={n} T=({T.r:.4g},{T.theta:.4g})", err, 1e-7))

    f = lambda u: u + u**3 / 7.0
    for _ in range(2):
        xi = pt(0.6, 2.0)
        phi = lambda x: q_laplace(
            f, x, params=P,
            quad=ray_window(x, P, growth=3.0, tail=1e-14, step=0.08), check=False,
        )
        got = q_borel_analytic(phi, xi, params=P, radius=0.5, step=0.15)
        want = f(xi.r * np.exp(1j * xi.theta))
        err = abs(got - want) / abs(want)
        rows.append(("borel-inverts-laplace", f"xi=({xi.r:.4g},{xi.theta:.4g})", err, 1e-5))

    for n in (1, 2):
        h = pt(0.2, 0.6)
        want = P.q ** float(borel_exponent(n, P.k) - borel_exponent(2 * n, P.k)) * (
            h.r * np.exp(1j * h.theta)
        ) ** n
        got = deceleration_integral(lambda x, n=n: x**n, 2, h, params=P, f_disc_radius=1.0)
        err = abs(got - want) / abs(want)
        rows.append(("deceleration-monomial", f"n={n} h=({h.r:.4g},{h.theta:.4g})", err, 1e-6))

    kap = P.k / (2.0 * P.log_q)
    for _ in range(5):
        lr = float(rng.uniform(-2, 2))
        dth = float(rng.uniform(-5, 5))
        got = abs(theta_kernel_log(complex(lr, dth), P))
        want = math.exp(-kap * (lr * lr - dth * dth) + 0.5 * lr)
        err = abs(got - want) / want
        rows.append(("kernel-modulus", f"log_ratio=({lr:.4g},{dth:.4g})", err, 1e-12))
    return rows


def _suite_geometry(spec, cfg, rng):
    rows = []
    report = validate_spec(spec)
    for c in report.conditions:
        rows.append(("condition", c.name + ": " + c.detail, 0.0 if c.ok else 1.0, 0.5))
    bound = pm_lower_bound_report(spec, cfg)
    rows.append(("pm-lower-bound", f"min margin {bound.min_margin:.4g}x delta1",
                 0.0 if bound.min_margin >= 1.0 else 1.0, 0.5))
    rows.append(("corridor-gap", bound.gap_detail, 0.0 if bound.gap_ok else 1.0, 0.5))
    rows.append(("far-field", f"constant {bound.far_field_constant:.4g}",
                 0.0 if math.isfinite(bound.far_field_constant) else 1.0, 0.5))
    return rows


def _suite_theorem2(spec, cfg, rng, order, tol):
    sol = solve_fixed_point(spec, cfg, order, tol=tol)
    pts = [
        (CoveringPoint(cfg.R / 8.0, 0.02), 0.3 + 0.1j),
        (CoveringPoint(cfg.R / 8.0, -0.15), -0.2 + 0.05j),
        (CoveringPoint(cfg.R / 8.0, 0.3), 0.1 - 0.2j),
    ]
    factor = 10.0 if not spec.terms else 100.0
    rep = theorem2_residual(sol, spec, cfg, pts, beta_prime=0.5 * spec.space.beta)
    rows = []
    for row in rep.rows:
        ratio = row["residual"] / max(factor * row["budget"], 1e-300)
        rows.append((
            "theorem2-residual",
            f"t=({row['t_r']:.4g},{row['t_theta']:.4g}) residual={row['residual']:.3e} "
            f"budget={row['budget']:.3e}",
            ratio,
            1.0,
        ))
    return rows


def _suite_asymptotics(spec, cfg, rng, order, tol):
    sol = solve_fixed_point(spec, cfg, max(order, 10), tol=tol)
    P = spec.params
    U = assemble_U_hat(sol, P)
    beta_prime = 0.5 * spec.space.beta
    om = ContinuedOmega(sol, spec, cfg)
    target = P.log_q / (2.0 * P.k)
    rows = []
    for frac in (0.25, 0.125):
        t = CoveringPoint(frac * cfg.R, 0.03)
        z = 0.2 + 0.1j
        full = gq_sum(om, t, z, cfg, spec, beta_prime=beta_prime, tail=1e-13, eps_rel=1e-10)
        u_n = inverse_fourier_table(U.coeffs, spec.space, [z], beta_prime)[:, 0]
        tc = t.r * np.exp(1j * t.theta)
        ns, le = [], []
        for N in range(2, 9):
            part = sum(u_n[n - 1] * tc**n for n in range(1, N))
            ns.append(float(N))
            le.append(math.log(abs(full - part)))
        _, _, c2 = fit_log_quadratic(np.array(ns), np.array(le))
        rows.append((
            "gevrey-rate",
            f"|t|={t.r:.4g}: N^2 coefficient {c2:.4f} vs log(q)/(2k)={target:.4f}",
            abs(c2 - target) / target,
            0.15,
        ))
    return rows


def cmd_verify(args) -> int:
    _, spec, digest = load_problem(args.spec_file)
    rng = np.random.default_rng(args.seed)
    rows4 = []
    status_ok = True
    if args.suite == "geometry":
        report = validate_spec(spec)
        if not report.ok:
            # the problem fails its structural conditions; report those rows
            # as the witnesses instead of running the geometry pipeline
            rows4 = [("condition", c.name + ": " + c.detail, 0.0 if c.ok else 1.0, 0.5)
                     for c in report.conditions]
            cfg = None
        else:
            cfg = select_sector(spec, args.direction)
    else:
        cfg = select_sector(spec, args.direction)
    if cfg is not None:
        try:
            if args.suite == "identities":
                rows4 = _suite_identities(spec, cfg, rng)
            elif args.suite == "geometry":
                rows4 = _suite_geometry(spec, cfg, rng)
            elif args.suite == "theorem2":
                rows4 = _suite_theorem2(spec, cfg, rng, args.order, args.tol)
            else:
                rows4 = _suite_asymptotics(spec, cfg, rng, args.order, args.tol)
        except QsumError as exc:
            rows4.append((args.suite + "-exception", f"{type(exc).__name__}: {exc}", 1.0, 0.5))

    header = ["check", "detail", "error", "tolerance", "status"]
    rows = []
    for check, detail, err, tol in rows4:
        ok = bool(err <= tol)
        status_ok &= ok
        rows.append((check, detail, float(err), float(tol), "pass" if ok else "FAIL"))
        print(f"{'pass' if ok else 'FAIL':>4}  {check}: {detail} (err {err:.3e} tol {tol:g})")
    manifest = make_manifest(
        "verify", digest, args,
        config=cfg,
        outcome={"suite": args.suite, "ok": status_ok, "checks": len(rows)},
    )
    _emit_rows(args, args.out, manifest, header, rows, f"verify_{args.suite}")
    return EXIT_OK if status_ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# sum


def _read_points(path: Path):
    pts = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(c) for c in row[:4]]
            except ValueError:
                continue  # header line
            if len(vals) < 4:
                raise ValidationError(f"points row needs 4 columns, got {row}")
            pts.append(tuple(vals))
    if not pts:
        raise ValidationError(f"no usable points in {path}")
    return pts


def cmd_sum(args) -> int:
    _, spec, digest = load_problem(args.spec_file)
    report = validate_spec(spec)
    if not report.ok:
        for c in report.failures():
            print(f"FAIL  {c.name}: {c.detail}", file=sys.stderr)
        return EXIT_SPEC
    cfg = select_sector(spec, args.direction)
    sol = solve_fixed_point(spec, cfg, args.order, tol=args.tol)
    om = ContinuedOmega(sol, spec, cfg)
    beta_prime = args.beta_prime if args.beta_prime is not None else 0.5 * spec.space.beta
    pts = _read_points(resolve_input(args.points))

    rows = []
    for t_r, t_theta, z_re, z_im in pts:
        z = complex(z_re, z_im)
        if t_r == 0.0:
            rows.append((t_r, t_theta, z_re, z_im, 0.0, 0.0, 0.0, "ok"))
            continue
        if abs(z_im) > beta_prime:
            rows.append((t_r, t_theta, z_re, z_im, "", "", "", "strip"))
            continue
        if t_r > cfg.R:
            rows.append((t_r, t_theta, z_re, z_im, "", "", "", "domain"))
            continue
        try:
            v = gq_sum(om, CoveringPoint(t_r, t_theta), z, cfg, spec,
                       beta_prime=beta_prime, tail=args.tail, eps_rel=args.eps_rel)
        except DomainTooLarge:
            rows.append((t_r, t_theta, z_re, z_im, "", "", "", "domain"))
            continue
        budget = om.floor_estimate() + args.eps_rel * abs(v)
        rows.append((t_r, t_theta, z_re, z_im, float(v.real), float(v.imag),
                     float(budget), "ok"))

    manifest = make_manifest(
        "sum", digest, args, config=cfg,
        outcome={"points": len(rows), "flagged": sum(1 for r in rows if r[-1] != "ok")},
    )
    header = ["t_r", "t_theta", "z_re", "z_im", "value_re", "value_im", "budget", "flag"]
    out = args.out or Path(".")
    _emit_rows(args, out, manifest, header, rows, "u_values")
    for row in rows:
        print(",".join(str(_cell(c)) for c in row))
    return EXIT_OK


# ---------------------------------------------------------------------------
# transform


def _parse_coeffs(text: str) -> np.ndarray:
    try:
        c = np.array([float(x) for x in text.split(",")], dtype=float)
    except ValueError as exc:
        raise UsageError(f"bad coefficient list {text!r}") from exc
    if c.size == 0:
        raise UsageError("need at least one coefficient")
    return c


def _parse_point(text: str) -> CoveringPoint:
    try:
        r, theta = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad point {text!r}; expected r,theta") from exc
    return CoveringPoint(r, theta)


def cmd_transform(args) -> int:
    _, spec, digest = load_problem(args.spec_file)
    P = spec.params
    c = _parse_coeffs(args.coeffs)
    pt = _parse_point(args.at)
    zc = pt.r * np.exp(1j * pt.theta)

    def poly(u):
        acc = np.zeros_like(u, dtype=complex)
        for cn in c[::-1]:
            acc = (acc + cn) * u
        return acc

    if args.op == "laplace":
        value = q_laplace(poly, pt, params=P, growth=float(c.size))
        reference = sum(
            c[n - 1] * P.q ** float(borel_exponent(n, P.k)) * zc**n
            for n in range(1, c.size + 1)
        )
    elif args.op == "borel":
        value = q_borel_analytic(
            lambda x: complex(poly(np.array([x.to_complex()]))[0]), pt, params=P
        )
        reference = sum(
            c[n - 1] * zc**n / P.q ** float(borel_exponent(n, P.k))
            for n in range(1, c.size + 1)
        )
    else:
        value = deceleration_integral(poly, args.p, pt, params=P)
        reference = sum(
            c[n - 1]
            * P.q ** float(borel_exponent(n, P.k) - borel_exponent(args.p * n, P.k))
            * zc**n
            for n in range(1, c.size + 1)
        )

    manifest = make_manifest(
        "transform", digest, args,
        outcome={"op": args.op, "abs_error": abs(value - reference)},
    )
    header = ["op", "at_r", "at_theta", "value_re", "value_im",
              "reference_re", "reference_im", "abs_error"]
    row = (args.op, pt.r, pt.theta, float(value.real), float(value.imag),
           float(reference.real), float(reference.imag), float(abs(value - reference)))
    print(f"{args.op} at ({pt.r:g},{pt.theta:g}): value {value:.12g}, "
          f"reference {reference:.12g}, |diff| {abs(value - reference):.3e}")
    _emit_rows(args, args.out, manifest, header, [row], f"transform_{args.op}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


class UsageError(Exception):
    pass


def _apply_threads(args):
    info = {"requested": args.threads}
    if args.threads is not None:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(args.threads)
            info["applied"] = True
        except Exception:  # missing controller: record, do not fail the run
            info["applied"] = False
    args._thread_info = info


def build_parser() -> _Parser:
    parser = _Parser(prog="qsum", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS thread pools (recorded in the manifest)")
    parser.add_argument("--seed", type=int, default=20260822,
                        help="seed for randomized verification samples")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="output table format for --out artifacts")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check the structural conditions of a problem file")
    p.add_argument("spec_file")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="run the fixed point and write solution artifacts")
    p.add_argument("spec_file")
    p.add_argument("--order", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--direction", type=float, default=0.0)
    p.add_argument("--beta-prime", type=float, default=None)
    p.add_argument("--z-points", type=int, default=21)
    p.add_argument("--force-triangular", action="store_true",
                   help="fall back to the triangular sweep when contraction fails")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run an invariant suite against a problem file")
    p.add_argument("spec_file")
    p.add_argument("--suite", required=True,
                   choices=("identities", "geometry", "theorem2", "asymptotics"))
    p.add_argument("--order", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--direction", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sum", help="evaluate the summed solution at listed points")
    p.add_argument("spec_file")
    p.add_argument("--points", required=True,
                   help="CSV of t_r,t_theta,z_re,z_im rows")
    p.add_argument("--order", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--direction", type=float, default=0.0)
    p.add_argument("--beta-prime", type=float, default=None)
    p.add_argument("--tail", type=float, default=1e-11)
    p.add_argument("--eps-rel", type=float, default=1e-8)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_sum)

    p = sub.add_parser("transform", help="one-off transform of a polynomial input")
    p.add_argument("spec_file", help="problem file supplying q and k")
    p.add_argument("--op", required=True, choices=("laplace", "borel", "decelerate"))
    p.add_argument("--coeffs", required=True,
                   help="comma list c1,c2,... of series coefficients from power 1")
    p.add_argument("--at", required=True, help="evaluation point r,theta on the covering")
    p.add_argument("--p", type=int, default=2, help="deceleration order")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    _apply_threads(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, SchemaError) as exc:
        print(f"invalid problem file: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (NoContraction, BadDirection, SmallDelta, DivergentInversion,
            StripViolation, DomainTooLarge) as exc:
        print(f"numeric regime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except QsumError as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REGIME


if __name__ == "__main__":
    sys.exit(main())
