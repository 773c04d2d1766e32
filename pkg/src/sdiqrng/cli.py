"""Command-line pipeline: simulate -> track -> certify -> extract, plus
grid sweeps and a quick self-test.

Every run is reproducible: each subcommand resolves its parameters from
built-in defaults, an optional JSON config file, and flags (in that
order of precedence), writes the resolved values to a ``*.manifest.json``
next to its output, and derives all randomness from explicit seeds.
Outputs contain no timestamps, so identical manifests give identical
bytes.

Exit codes: 0 success, 2 usage, 3 data/format, 4 assumption violation
(including data inconsistent with the energy bound), 5 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import acquisition, extract, sweep, tracking
from .certify import Certificate, ProbTable, certify
from .errors import (
    AssumptionError,
    DataInconsistentError,
    FormatError,
    SdiQrngError,
    SolverError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ASSUMPTION = 4
EXIT_SOLVER = 5


def _global_flags(parser: argparse.ArgumentParser, top_level: bool) -> None:
    # accepted both before and after the subcommand; sub-level uses SUPPRESS
    # so an absent flag never clobbers the top-level value
    suppress = argparse.SUPPRESS
    parser.add_argument("--seed", type=int, help="master RNG seed",
                        **({"default": 0} if top_level else {"default": suppress}))
    parser.add_argument("--workers", type=int, help="worker processes for sweeps",
                        **({"default": 1} if top_level else {"default": suppress}))
    parser.add_argument("--output-dir", help="directory for outputs",
                        **({"default": "."} if top_level else {"default": suppress}))
    parser.add_argument("--config", help="JSON config file (flags override)",
                        **({"default": None} if top_level else {"default": suppress}))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdiqrng",
        description="semi-device-independent QRNG simulation and certification pipeline",
    )
    _global_flags(parser, top_level=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, top_level=False)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an acquisition run", parents=[common])
    sim.add_argument("--mu", type=float, default=None)
    sim.add_argument("--eta", type=float, default=None)
    sim.add_argument("--rounds", type=float, default=None)
    sim.add_argument("--rep-rate", type=float, default=None)
    sim.add_argument("--drift-deg-s", type=float, default=None)
    sim.add_argument("--diffusion", type=float, default=None)
    sim.add_argument("--phi0-deg", type=float, default=None)
    sim.add_argument("--out", default=None, help="trial file name")
    sim.add_argument("--csv", default=None, help="optional CSV debug export")

    trk = sub.add_parser("track", parents=[common], help="classify a trial stream")
    trk.add_argument("--trials", required=True)
    trk.add_argument("--chunk-size", type=float, default=None)
    trk.add_argument("--out", default=None, help="classified trial file name")
    trk.add_argument("--chunk-csv", default=None)
    trk.add_argument("--counts", default=None, help="counts JSON name")

    cert = sub.add_parser("certify", parents=[common], help="certify min-entropy from counts")
    cert.add_argument("--counts", required=True)
    cert.add_argument("--mu", type=float, required=True)
    cert.add_argument("--epsilon", type=float, default=None)
    cert.add_argument("--finite-size", action="store_true")
    cert.add_argument("--out", default=None, help="certificate JSON name")

    ext = sub.add_parser("extract", parents=[common], help="hash classified outcomes to uniform bits")
    ext.add_argument("--trials", required=True, help="classified trial file")
    ext.add_argument("--certificate", required=True)
    ext.add_argument("--epsilon-re", type=float, default=None)
    ext.add_argument("--hash-seed", type=int, default=None,
                     help="PRNG seed for the hash seed bits (reproducible runs); "
                          "omit to draw from the OS entropy source")
    ext.add_argument("--out", default=None, help="extracted bit file name")

    swp = sub.add_parser("sweep", parents=[common], help="certified Hmin over a mu grid")
    swp.add_argument("--mu-min", type=float, default=None)
    swp.add_argument("--mu-max", type=float, default=None)
    swp.add_argument("--mu-step", type=float, default=None)
    swp.add_argument("--eta", type=float, default=None)
    swp.add_argument("--theta-deg", default=None, help="comma-separated homodyne angles")
    swp.add_argument("--out", default=None)
    swp.add_argument("--theta-max-out", default=None)

    sub.add_parser("selftest", parents=[common], help="run quick built-in checks")
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"config file must hold a JSON object: {path}")
    return doc


def _resolve(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    for key in defaults:
        if key in config:
            resolved[key] = config[key]
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _write_manifest(path: Path, command: str, params: dict) -> None:
    doc = {"command": command, **params}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _cmd_simulate(args, config, outdir: Path) -> int:
    params = _resolve(args, config, {
        "mu": 0.2,
        "eta": 1.0,
        "rounds": 1e6,
        "rep_rate": acquisition.DEFAULT_REP_RATE,
        "drift_deg_s": 32.0,
        "diffusion": 0.0,
        "phi0_deg": 0.0,
        "seed": args.seed,
        "out": "trials.bin",
        "csv": None,
    })
    rounds = int(params["rounds"])
    if rounds < 1:
        raise FormatError("--rounds must be >= 1")
    cfg = acquisition.RunConfig(
        mu=params["mu"],
        eta=params["eta"],
        n_rounds=rounds,
        rep_rate=params["rep_rate"],
        drift=acquisition.DriftModel(
            rate=np.deg2rad(params["drift_deg_s"]),
            diffusion=params["diffusion"],
            phi0=np.deg2rad(params["phi0_deg"]),
        ),
        rng_seed=int(params["seed"]),
    )
    records = acquisition.simulate_run(cfg)
    out = outdir / params["out"]
    acquisition.write_trials(records, out)
    if params["csv"]:
        acquisition.write_trials_csv(records, outdir / params["csv"])
    params["rounds"] = rounds
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "simulate", params)
    print(f"wrote {rounds} rounds to {out}")
    return EXIT_OK


def _cmd_track(args, config, outdir: Path) -> int:
    params = _resolve(args, config, {
        "trials": None,
        "chunk_size": tracking.DEFAULT_CHUNK_SIZE,
        "out": "classified.bin",
        "chunk_csv": "chunks.csv",
        "counts": "counts.json",
    })
    try:
        records = acquisition.read_trials(params["trials"])
    except FileNotFoundError as exc:
        raise FormatError(f"trial file not found: {params['trials']}") from exc
    result = tracking.track_stream(records, chunk_size=int(params["chunk_size"]))
    out = outdir / params["out"]
    acquisition.write_trials(result.records, out)
    tracking.write_chunk_csv(result.summaries, outdir / params["chunk_csv"])
    counts_doc = {
        "n_bx": result.counts.n_bx.tolist(),
        "n_x": result.counts.n_x.tolist(),
        "n_classified": result.n_classified,
        "skipped_chunks": result.skipped_chunks,
        "chunk_size": int(params["chunk_size"]),
    }
    (outdir / params["counts"]).write_text(json.dumps(counts_doc, sort_keys=True, indent=2) + "\n")
    params["chunk_size"] = int(params["chunk_size"])
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "track", params)
    p = result.counts.p_bx()
    print(
        f"classified {result.n_classified} records in {len(result.summaries)} chunks "
        f"({len(result.skipped_chunks)} skipped); p(0|0)={p[0, 0]:.5f} p(1|1)={p[1, 1]:.5f}"
    )
    return EXIT_OK


def _cmd_certify(args, config, outdir: Path) -> int:
    params = _resolve(args, config, {
        "counts": None,
        "mu": None,
        "epsilon": 1e-10,
        "finite_size": False,
        "out": "certificate.json",
    })
    if getattr(args, "finite_size", False):
        params["finite_size"] = True
    try:
        with open(params["counts"]) as fh:
            doc = json.load(fh)
        n_bx = np.array(doc["n_bx"], dtype=np.int64)
    except FileNotFoundError as exc:
        raise FormatError(f"counts file not found: {params['counts']}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise FormatError(f"counts file malformed: {params['counts']}: {exc}") from exc
    counts = tracking.ConditionalCounts(n_bx)
    pt = ProbTable.from_counts(counts)
    cert = certify(
        pt, mu=params["mu"], epsilon=params["epsilon"], finite_size=bool(params["finite_size"])
    )
    out = outdir / params["out"]
    out.write_text(cert.to_json() + "\n")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "certify", params)
    print(
        f"Pg <= {cert.pg_upper:.6f}  Hmin = {cert.hmin_rate:.6f} bits/round "
        f"(finite_size={cert.finite_size}, gap={cert.duality_gap:.2e})"
    )
    return EXIT_OK


def _cmd_extract(args, config, outdir: Path) -> int:
    params = _resolve(args, config, {
        "trials": None,
        "certificate": None,
        "epsilon_re": extract.DEFAULT_EPSILON_RE,
        "hash_seed": None,
        "out": "extracted.bin",
    })
    try:
        records = acquisition.read_trials(params["trials"])
        cert = Certificate.from_json(Path(params["certificate"]).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"input not found: {exc.filename}") from exc
    raw = records["b"]
    raw = raw[raw != acquisition.B_UNASSIGNED].astype(np.uint8)
    if len(raw) == 0:
        raise FormatError("no classified outcomes in trial file; run track first")
    n_out = extract.output_length(len(raw), cert.hmin_rate, params["epsilon_re"])
    if n_out < 1:
        raise AssumptionError(
            f"certified rate {cert.hmin_rate:.4f} with n_in={len(raw)} leaves no extractable bits"
        )
    seed_bits = extract.make_seed_bits(
        len(raw) + n_out - 1,
        None if params["hash_seed"] is None else int(params["hash_seed"]),
    )
    p = extract.ExtractorParams(len(raw), n_out, seed_bits, params["epsilon_re"])
    bits = extract.toeplitz_hash(raw, p)
    out = outdir / params["out"]
    out.write_bytes(extract.pack_bits(bits))
    manifest = out.with_suffix(out.suffix + ".manifest.json")
    manifest.write_text(extract.extraction_manifest(p, cert.inputs_digest) + "\n")
    print(f"extracted {n_out} bits from {len(raw)} raw bits -> {out}")
    return EXIT_OK


def _parse_thetas(spec: str) -> tuple[float, ...]:
    try:
        return tuple(np.deg2rad(float(v)) for v in spec.split(","))
    except ValueError as exc:
        raise FormatError(f"bad theta list {spec!r}") from exc


def _cmd_sweep(args, config, outdir: Path) -> int:
    params = _resolve(args, config, {
        "mu_min": 0.01,
        "mu_max": 0.5,
        "mu_step": 0.005,
        "eta": 0.173,
        "theta_deg": "0,15,30,45,60,75,90",
        "out": "sweep.csv",
        "theta_max_out": "theta_max.csv",
        "workers": args.workers,
    })
    if params["mu_step"] <= 0 or params["mu_max"] < params["mu_min"]:
        raise FormatError("empty mu grid")
    mu_grid = np.arange(params["mu_min"], params["mu_max"] + params["mu_step"] / 2,
                        params["mu_step"])
    thetas = _parse_thetas(params["theta_deg"])
    try:
        rows = sweep.sweep_table(mu_grid, params["eta"], thetas,
                                 workers=int(params["workers"]))
        curve = sweep.theta_max_curve(thetas, mu_grid)
    except (SolverError, DataInconsistentError) as exc:
        raise SolverError(f"sweep aborted: {exc}") from exc
    out = outdir / params["out"]
    sweep.write_sweep_csv(rows, thetas, out)
    sweep.write_theta_max_csv(curve, outdir / params["theta_max_out"])
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "sweep", params)
    best = max(rows, key=lambda r: r.hmin_ideal)
    print(
        f"{len(rows)} grid points -> {out}; ideal max Hmin {best.hmin_ideal:.4f} "
        f"bits at mu={best.mu:.3f}"
    )
    return EXIT_OK


def _cmd_selftest(outdir: Path) -> int:
    from .phase_space import prob_heterodyne

    checks: list[tuple[str, bool]] = []
    table = prob_heterodyne(1.0)
    checks.append(("heterodyne table p(0|0) ~ 0.92135", abs(table[0, 0] - 0.9213503964) < 1e-9))

    pt = ProbTable(prob_heterodyne(np.sqrt(0.1)))
    cert = certify(pt, mu=0.1)
    checks.append(("certified Hmin(mu=0.1) in (0.15, 0.20)", 0.15 < cert.hmin_rate < 0.20))
    checks.append(("duality gap below 1e-6", cert.duality_gap < 1e-6))

    seed = np.array([1, 0, 1, 1], dtype=np.uint8)
    raw = np.array([1, 1, 0], dtype=np.uint8)
    out_bits = extract.toeplitz_hash(raw, extract.ExtractorParams(3, 2, seed))
    checks.append(("Toeplitz worked example -> (1, 0)", out_bits.tolist() == [1, 0]))

    cfg = acquisition.RunConfig(mu=0.2, n_rounds=20_000, rng_seed=7)
    result = tracking.track_stream(acquisition.simulate_run(cfg))
    p = result.counts.p_bx()
    expected = prob_heterodyne(np.sqrt(0.2))[0, 0]
    checks.append(("tracked p(0|0) near prediction", abs(p[0, 0] - expected) < 0.02))

    ok = True
    for name, passed in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
        ok &= passed
    return EXIT_OK if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _load_config(args.config)
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return _cmd_simulate(args, config, outdir)
        if args.command == "track":
            return _cmd_track(args, config, outdir)
        if args.command == "certify":
            return _cmd_certify(args, config, outdir)
        if args.command == "extract":
            return _cmd_extract(args, config, outdir)
        if args.command == "sweep":
            return _cmd_sweep(args, config, outdir)
        if args.command == "selftest":
            return _cmd_selftest(outdir)
        parser.error(f"unknown command {args.command!r}")
    except (AssumptionError, DataInconsistentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SdiQrngError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
