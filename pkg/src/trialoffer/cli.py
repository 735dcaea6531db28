"""Command-line front end.

    trialoffer simulate --config run.json --out results/
    trialoffer compare  --config run.json --policies quality:SI,quality:IN,random --out cmp/
    trialoffer verify   --suite example1 --seed 7 --out reports/

Exit status: 0 on success, 1 when a verification suite fails, 2 on usage,
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import efficiency_table, predictability_report
from .errors import ConfigError, MarketError
from .market import Condition
from .policies import PolicyKind
from .scenario import ExperimentConfig, parse_config
from .simulator import ExperimentResult, run_experiment
from .verify import SUITES

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

logger = logging.getLogger("trialoffer")


class CliError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_curve(path: Path, result: ExperimentResult) -> None:
    curves = result.download_curves.astype(float)
    mean = curves.mean(axis=0)
    if curves.shape[0] > 1:
        se = curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0])
    else:
        se = np.zeros_like(mean)
    rows = ((int(s), _fmt(m), _fmt(e)) for s, m, e in zip(result.curve_steps, mean, se))
    _write_csv(path, ("step", "mean_cumulative_downloads", "stderr"), rows)


def write_final(path: Path, result: ExperimentResult) -> None:
    q = result.config.catalog.qualities
    rows = []
    for trace in result.traces:
        for i, d in enumerate(trace.final_downloads):
            rows.append((trace.world_id, i + 1, _fmt(q[i]), int(d)))
    _write_csv(path, ("world_id", "song_id", "quality", "downloads"), rows)


def _load(path: str) -> tuple[ExperimentConfig, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8 text") from None
    return parse_config(text, path), raw


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    return config.with_overrides(worlds=args.worlds, steps=args.steps, master_seed=args.seed)


def _manifest(out: Path, config_bytes: bytes, args, outputs: list[str], started: datetime) -> None:
    manifest = {
        "config_digest": hashlib.sha256(config_bytes).hexdigest(),
        "tool_version": __version__,
        "command": args.command,
        "overrides": {k: getattr(args, k, None) for k in ("worlds", "steps", "seed")},
        "started_at": started.isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc)
    config, raw = _load(args.config)
    sim = _apply_overrides(config, args).to_simulation()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(sim, threads=args.threads)
    write_curve(out / "downloads_curve.csv", result)
    write_final(out / "final_downloads.csv", result)
    _manifest(out, raw, args, ["downloads_curve.csv", "final_downloads.csv"], started)
    print(f"simulated {sim.worlds} worlds x {sim.steps} steps -> {out}")
    return EXIT_OK


def parse_policies(text: str, default: Condition) -> list[tuple[PolicyKind, Condition]]:
    pairs = []
    for token in filter(None, (t.strip() for t in text.split(","))):
        name, _, cond = token.partition(":")
        try:
            pair = (PolicyKind.parse(name), Condition.parse(cond) if cond else default)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        if pair in pairs:
            raise CliError(f"duplicate policy {token!r}")
        pairs.append(pair)
    if len(pairs) < 2:
        raise CliError("compare needs at least two policy/condition pairs")
    return pairs


def cmd_compare(args) -> int:
    started = datetime.now(timezone.utc)
    config, raw = _load(args.config)
    config = _apply_overrides(config, args)
    pairs = parse_policies(args.policies, config.condition)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    outputs = []
    for kind, cond in pairs:
        sim = config.with_overrides(policy=kind, condition=cond).to_simulation()
        result = run_experiment(sim, threads=args.threads)
        results.append(result)
        tag = f"{kind.value}_{cond.value}"
        write_curve(out / f"curve_{tag}.csv", result)
        write_final(out / f"final_downloads_{tag}.csv", result)
        outputs += [f"curve_{tag}.csv", f"final_downloads_{tag}.csv"]
    rows = efficiency_table(results)
    _write_csv(
        out / "efficiency_table.csv",
        ("policy", "condition", "downloads_per_trial", "stderr"),
        ((r.policy, r.condition, _fmt(r.downloads_per_trial), _fmt(r.stderr)) for r in rows),
    )
    pred = []
    for (kind, cond), result in zip(pairs, results):
        if result.config.worlds >= 2:
            rep = predictability_report(result)
            pred.append((kind.value, cond.value, _fmt(rep.top_win_rate), _fmt(rep.unpredictability)))
    _write_csv(
        out / "predictability.csv", ("policy", "condition", "top_win_rate", "unpredictability"), pred
    )
    outputs += ["efficiency_table.csv", "predictability.csv"]
    _manifest(out, raw, args, outputs, started)
    for r in rows:
        print(f"{r.policy:>12} {r.condition}  {r.downloads_per_trial:.4f} +/- {r.stderr:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise CliError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    report = SUITES[args.suite](seed=args.seed)
    payload = json.dumps(report.to_dict(), indent=2, default=float) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{args.suite}.json").write_text(payload)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {args.suite}: {report.checks} checks, {len(report.failures)} failures")
    for failure in report.failures[:20]:
        print(f"  {failure}")
    return EXIT_OK if report.passed else EXIT_FAILED


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trialoffer", description="Trial-offer market simulations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per world")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--worlds", type=_positive, help="override the number of worlds")
        p.add_argument("--steps", type=_positive, help="override the number of steps")
        p.add_argument("--seed", type=_u64, help="override the master seed")
        p.add_argument("--threads", type=_nonneg, default=1, help="worker threads (0 = one per CPU)")

    sim = sub.add_parser("simulate", help="run one configuration and write CSV outputs")
    run_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="run several policies on the same market")
    run_flags(cmp_)
    cmp_.add_argument(
        "--policies",
        required=True,
        help="comma list of policy[:SI|IN], e.g. quality:SI,quality:IN,random",
    )
    cmp_.set_defaults(func=cmd_compare)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("--suite", required=True, help=f"one of: {', '.join(SUITES)}")
    ver.add_argument("--seed", type=_u64, default=2015)
    ver.add_argument("--out", help="directory for the JSON report")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, ConfigError, MarketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
