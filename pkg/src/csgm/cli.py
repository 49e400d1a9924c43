"""Command-line entry point: ``csgm gen | run | sgm | eval | diag band-hist``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bloom
from .discovery import DEFAULT_MAX_DEPTH, DEFAULT_MIN_SET_SIZE, Direction, discover_family, dump_family
from .detection import write_verdicts
from .evaluation import band_repetition_histogram, score
from .graph import (
    DEFAULT_MIN_AMOUNT,
    AccountIndex,
    aggregate_edges,
    filter_small_transactions,
    load_accounts,
    load_graph,
    make_view,
    parse_amount,
    prepare_view,
)
from .protocol import SessionConfig, communication_report, run_session
from .sgm import DEFAULT_THRESHOLD, run_sgm_all_sources
from .sketch import MinHashParams
from .synth import GenConfig, generate, load_labels, write_dataset

log = logging.getLogger("csgm")


def _amount(text: str) -> int:
    return parse_amount(text)


def _sidecar(view_path: Path) -> Path:
    return view_path.with_name(view_path.stem + ".accounts.csv")


def _load_view(path: str, party: str, accounts: str | None, min_amount: int, id_map: AccountIndex | None = None):
    p = Path(path)
    acc_path = Path(accounts) if accounts else _sidecar(p)
    owned = load_accounts(acc_path) if acc_path.exists() else None
    if owned is None:
        log.info("no account list for %s; inferring ownership from internal edges", p)
    view = make_view(party, load_graph(p, id_map), owned)
    return prepare_view(view, min_amount)


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def cmd_gen(args) -> int:
    raw = {}
    if args.config:
        raw = GenConfig.from_toml(args.config).__dict__.copy()
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = GenConfig.from_mapping(raw)
    ds = generate(cfg)
    paths = write_dataset(ds, args.out, cfg)
    log.info("wrote %d accounts, %d edges, %d groups to %s", len(ds.full), len(ds.full.edges), len(ds.groups), args.out)
    _write_json({k: str(v) for k, v in paths.items()}, None)
    return 0


def _session_config(args) -> SessionConfig:
    kw = dict(
        tau=args.tau,
        seed=args.seed,
        filter_bits=args.filter_bits,
        probe_hashes=args.probe_hashes,
        max_depth=args.max_depth,
        min_set_size=args.min_set_size,
        num_hashes=args.num_hashes,
    )
    if args.band_rows is not None:
        kw["band_rows"] = args.band_rows
    return SessionConfig.for_mode(args.mode, **kw)


def cmd_run(args) -> int:
    cfg = _session_config(args)
    id_map = AccountIndex.load(args.id_map) if args.id_map and Path(args.id_map).exists() else (AccountIndex() if args.id_map else None)
    view_a = _load_view(args.view_a, "A", args.accounts_a, args.min_amount, id_map)
    view_b = _load_view(args.view_b, "B", args.accounts_b, args.min_amount, id_map)
    if id_map is not None:
        id_map.save(args.id_map)
    transcript = run_session(view_a, view_b, cfg)
    _write_json(transcript.to_dict(), args.out)
    if args.dump_dir:
        d = Path(args.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        for view in (view_a, view_b):
            for direction in Direction:
                fam = discover_family(view, direction, cfg.max_depth, cfg.min_set_size)
                dump_family(fam, d / f"family_{view.party.value}_{direction.value}.jsonl")
        for party, per_dir in transcript.verdicts.items():
            for direction, verdicts in per_dir.items():
                write_verdicts(verdicts, d / f"verdicts_{party}_{direction}.jsonl")
    report = communication_report(transcript)
    for party, info in sorted(report["per_party"].items()):
        log.info("party %s sent %d bytes", party, info["total_bytes"])
    log.info("%d groups detected", len(transcript.groups))
    return 0


def cmd_sgm(args) -> int:
    g = filter_small_transactions(aggregate_edges(load_graph(args.graph)), args.min_amount)
    dets = run_sgm_all_sources(g, args.threshold, args.min_group_size)
    _write_json([d.to_dict() for d in dets], args.out)
    return 0


def cmd_eval(args) -> int:
    session = json.loads(Path(args.session).read_text(encoding="utf-8"))
    labels, group_of = load_labels(args.labels)
    predicted = set(session.get("predicted_illicit", []))
    scores = None
    if session.get("params", {}).get("mode") == "sim":
        scores = {int(k): float(v) for k, v in session.get("scores", {}).items()}
    report = score(predicted, labels, scores, group_of)
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_band_hist(args) -> int:
    view = _load_view(args.view, args.party, args.accounts, args.min_amount)
    fam = discover_family(view, args.direction, args.max_depth, args.min_set_size)
    params = MinHashParams(args.num_hashes, args.band_rows, args.seed)
    _write_json(band_repetition_histogram(fam, params), args.out)
    return 0


def _add_session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["sim", "prob"], default="sim")
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-hashes", type=int, default=100)
    p.add_argument("--band-rows", type=int, default=None, help="default: 2 for sim, 5 for prob")
    p.add_argument("--filter-bits", type=int, default=bloom.DEFAULT_FILTER_BITS)
    p.add_argument("--probe-hashes", type=int, default=bloom.DEFAULT_PROBES)
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--min-set-size", type=int, default=DEFAULT_MIN_SET_SIZE)


def _add_amount_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--min-amount", type=_amount, default=DEFAULT_MIN_AMOUNT, help="drop transactions below this (currency units)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csgm", description="Collaborative scatter-gather mining")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic two-institution dataset")
    p.add_argument("--config", help="TOML file with GenConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="simulate a two-party session")
    p.add_argument("--view-a", required=True)
    p.add_argument("--view-b", required=True)
    p.add_argument("--accounts-a", help="owned accounts of A (default: <view>.accounts.csv)")
    p.add_argument("--accounts-b")
    p.add_argument("--id-map", help="sidecar name,id file for string account ids")
    p.add_argument("--dump-dir", help="also write set families and verdicts as JSON lines")
    p.add_argument("--out")
    _add_session_args(p)
    _add_amount_arg(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sgm", help="centralized scatter-gather mining baseline")
    p.add_argument("--graph", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--min-group-size", type=int, default=1)
    p.add_argument("--out")
    _add_amount_arg(p)
    p.set_defaults(func=cmd_sgm)

    p = sub.add_parser("eval", help="score a session against labels")
    p.add_argument("--session", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    diag = sub.add_parser("diag", help="diagnostics")
    dsub = diag.add_subparsers(dest="diag_command", required=True)
    p = dsub.add_parser("band-hist", help="histogram of repeated band fingerprints")
    p.add_argument("--view", required=True)
    p.add_argument("--party", choices=["A", "B"], default="A")
    p.add_argument("--accounts")
    p.add_argument("--direction", choices=["scatter", "gather"], default="scatter")
    p.add_argument("--num-hashes", type=int, default=100)
    p.add_argument("--band-rows", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--min-set-size", type=int, default=DEFAULT_MIN_SET_SIZE)
    p.add_argument("--out")
    _add_amount_arg(p)
    p.set_defaults(func=cmd_band_hist)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
