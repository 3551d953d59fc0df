"""Command-line interface: ``lodt run|montecarlo|verify|classical``.

Exit codes: 0 success, 1 physics violation or failed claim, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import __version__
from .engine import (
    ProtocolConfig,
    ProtocolViolation,
    Transcript,
    run_protocol,
    validate_transcript,
)
from .geometry import GeometryConfig
from .lab import (
    BUCKETS,
    STATS_SCHEMA,
    SummaryStats,
    certify_classical,
    classical_xor_run,
    location_bucket,
    monte_carlo,
    summarize,
    verify_claim_i,
    verify_claim_ii,
)
from .strategies import parse_strategy

OUT_ENV = "LODT_OUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _manifest(command: str, cfg: ProtocolConfig | None, outputs: list[Path], fmt: str,
              **extra) -> dict:
    doc = {
        "tool": "lodt",
        "version": __version__,
        "command": command,
        "config": cfg.to_json() if cfg is not None else None,
        "master_seed": cfg.seed if cfg is not None else None,
        "format": fmt,
        "outputs": [str(p) for p in outputs],
    }
    doc.update(extra)
    return doc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _config_from_args(args) -> ProtocolConfig:
    try:
        geometry = GeometryConfig(T=args.T)
        alice = parse_strategy("alice", args.alice, args.d)
        bob = parse_strategy("bob", args.bob, args.d)
        return ProtocolConfig(d=args.d, geometry=geometry, alice=alice, bob=bob, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV, "lodt-out"))


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    if args.datum == "random":
        datum = "random"
    else:
        try:
            datum = int(args.datum)
        except ValueError:
            raise UsageError(f"--datum must be an integer or 'random', got {args.datum!r}") from None
        if not 1 <= datum <= cfg.d**2:
            raise UsageError(f"--datum must lie in [1, {cfg.d ** 2}]")
    path = _out_dir(args) / "transcript.json"
    manifest = _manifest("run", cfg, [path], "json", datum=args.datum)
    try:
        tr = run_protocol(cfg, datum)
    except ProtocolViolation as exc:
        _write(path, _dump({"manifest": manifest, "transcript": exc.transcript.to_dict()}))
        print(f"{exc.kind}: {exc}", file=sys.stderr)
        print(f"diagnostic transcript written to {path}", file=sys.stderr)
        return EXIT_FAIL
    _write(path, _dump({"manifest": manifest, "transcript": tr.to_dict()}))
    ans = tr.answer()
    coins = ",".join(str(k) for k in tr.bob_coins()) or "-"
    if ans is None:
        learned = "no output"
    else:
        where = location_bucket(ans.location, cfg.geometry)
        learned = f"output {ans.payload['datum']} at {ans.location} [{where}]"
    print(f"datum={tr.datum} j={tr.alice_j()} k={coins} {learned} -> {path}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    if args.trials < 1:
        raise UsageError(f"--trials must be at least 1, got {args.trials}")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    cfg = _config_from_args(args)
    out = _out_dir(args)
    paths = {"json": out / "stats.json", "csv": out / "stats.csv"}
    wanted = ["json", "csv"] if args.format == "both" else [args.format]
    manifest = _manifest("montecarlo", cfg, [paths[f] for f in wanted], args.format,
                         trials=args.trials)
    stats = monte_carlo(cfg, args.trials, cfg.seed, workers=args.workers)
    claims = [verify_claim_i(stats), verify_claim_ii(stats)]
    if "json" in wanted:
        _write(paths["json"], _dump({"manifest": manifest, "stats": stats.to_json(),
                                     "claims": [c.to_json() for c in claims]}))
    if "csv" in wanted:
        _write(paths["csv"], "# manifest: " + json.dumps(manifest) + "\n" + stats.to_csv())
    print(summarize(stats, claims))
    ok = all(c.passed for c in claims) and stats.engine_violations == 0
    return EXIT_OK if ok else EXIT_FAIL


def _check_stats(stats: SummaryStats) -> list[str]:
    problems = []
    if sum(stats.location_counts.values()) > stats.trials:
        problems.append("location counts exceed the trial count")
    if stats.identified > stats.trials or stats.outside_intersection > stats.trials:
        problems.append("counts exceed the trial count")
    if stats.claim_i_violations:
        problems.append(f"{stats.claim_i_violations} claim (i) violations recorded")
    return problems


def _verify_csv(text: str) -> list[str]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# manifest: "):
        raise ValueError("missing manifest header line")
    manifest = json.loads(lines[0][len("# manifest: "):])
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    if [r["location"] for r in rows] != list(BUCKETS):
        raise ValueError("unexpected location rows")
    trials = manifest["trials"]
    problems = []
    total = 0
    for r in rows:
        count = int(r["count"])
        total += count
        if abs(float(r["frequency"]) - count / trials) > 1e-12:
            problems.append(f"frequency of {r['location']} does not match its count")
        if not float(r["ci_low"]) <= float(r["frequency"]) <= float(r["ci_high"]):
            problems.append(f"frequency of {r['location']} lies outside its interval")
    if total > trials:
        problems.append("location counts exceed the trial count")
    return problems


def cmd_verify(args) -> int:
    path = Path(args.path)
    try:
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".csv":
            problems = _verify_csv(text)
        else:
            doc = json.loads(text)
            if "stats" in doc:
                if doc["stats"].get("schema") != STATS_SCHEMA:
                    raise ValueError("unsupported stats schema")
                problems = _check_stats(SummaryStats.from_json(doc["stats"]))
            else:
                tr = Transcript.from_dict(doc)
                report = validate_transcript(tr)
                problems = [f"{v.kind} violation at event {v.event}: {v.message}"
                            for v in report.violations]
                if tr.aborted:
                    print(f"note: run was aborted by {tr.violation['type']}: {tr.violation['message']}")
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        print(f"error: cannot parse {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if problems:
        for line in problems:
            print(line)
        return EXIT_FAIL
    print(f"{path}: ok")
    return EXIT_OK


def cmd_classical(args) -> int:
    for name in ("j", "b0", "b1"):
        if getattr(args, name) not in (0, 1):
            raise UsageError(f"--{name} must be 0 or 1")
    geometry = GeometryConfig(T=args.T)
    if args.sweep:
        for j in (0, 1):
            cert = certify_classical(j, geometry)
            where = location_bucket(cert.learning_location, geometry) if cert.certified else "nowhere"
            print(f"j={j}: b learned with probability {cert.identification_probability:g} at {where}")
        return EXIT_OK
    tr = classical_xor_run(args.j, args.b0, args.b1, geometry)
    path = _out_dir(args) / "classical.json"
    manifest = _manifest("classical", tr.config, [path], "json")
    _write(path, _dump({"manifest": manifest, "transcript": tr.to_dict()}))
    ans = tr.answer()
    print(f"b={ans.payload['datum']} learned at {location_bucket(ans.location, geometry)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lodt", description="Location-oblivious data transfer simulator")
    parser.add_argument("--version", action="version", version=f"lodt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--d", type=int, default=2, help="qudit dimension (2..16)")
        p.add_argument("--T", type=float, default=1.0, help="transfer time parameter")
        p.add_argument("--alice", default="honest", help="alice strategy id[:params]")
        p.add_argument("--bob", default="honest", help="bob strategy id[:params]")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./lodt-out)")
        p.add_argument("--format", choices=("json", "csv", "both"), default="both")

    p = sub.add_parser("run", help="run one protocol instance")
    common(p)
    p.add_argument("--datum", default="random", help="datum i in 1..d^2, or 'random'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("montecarlo", help="run a batch and check the security claims")
    common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("verify", help="re-validate an emitted file")
    p.add_argument("path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("classical", help="classical XOR variant with the broadcast attack")
    p.add_argument("--j", type=int, default=0)
    p.add_argument("--b0", type=int, default=0)
    p.add_argument("--b1", type=int, default=0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--sweep", action="store_true", help="certify both j values over all bit splits")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_classical)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
