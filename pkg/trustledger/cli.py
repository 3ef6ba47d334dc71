#!/usr/bin/env python3
"""
Command-line entry point.

Exit codes:
  0  success / all expected outcomes met
  1  domain negative (no valid path, verification FAIL, unexpected sim outcome)
  2  usage or input error (bad file, unknown entity, rejected schedule)
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .crypto import AccountId, Hash256
from .errors import ConfigError, GraphError, TrustLedgerError, UnknownNode

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trustledger",
        description="TrustLedger - ledger-anchored PKI for UAV swarms",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG")

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    build_parser = subparsers.add_parser(
        "chain-build", help="Build a chain from genesis and a schedule"
    )
    build_parser.add_argument("--genesis", required=True, help="Genesis JSON file")
    build_parser.add_argument("--schedule", help="Transaction schedule JSON file (default: empty)")
    build_parser.add_argument("--out", required=True, help="Output chain file")

    chain_verify_parser = subparsers.add_parser(
        "chain-verify", help="Replay and verify a chain file"
    )
    chain_verify_parser.add_argument("--chain", required=True, help="Chain file")
    chain_verify_parser.add_argument("--genesis-hash", help="Expected genesis header hash (hex)")

    provision_parser = subparsers.add_parser(
        "provision", help="Write a provisioning bundle for one entity"
    )
    provision_parser.add_argument("--chain", required=True, help="Chain file")
    provision_parser.add_argument("--owner", required=True, help="Entity name or account id (hex)")
    provision_parser.add_argument("--k-out", type=int, default=0, help="Outgoing view depth")
    provision_parser.add_argument("--k-in", type=int, default=0, help="Incoming view depth")
    provision_parser.add_argument("--out", required=True, help="Output bundle file")

    bundle_verify_parser = subparsers.add_parser("bundle-verify", help="Verify a bundle file")
    bundle_verify_parser.add_argument("bundle", help="Bundle file")
    bundle_verify_parser.add_argument("--genesis-hash", help="Expected genesis header hash (hex)")

    path_parser = subparsers.add_parser("path", help="Print the shortest valid trust path")
    path_parser.add_argument("--chain", required=True, help="Chain file")
    path_parser.add_argument("--from", dest="source", required=True, help="Source entity")
    path_parser.add_argument("--to", dest="target", required=True, help="Target entity")

    sim_parser = subparsers.add_parser("sim", help="Run a simulation scenario")
    sim_parser.add_argument("--scenario", required=True, help="Scenario JSON file")
    sim_parser.add_argument("--seed", type=int, help="Override the scenario seed")
    sim_parser.add_argument(
        "--digest-only", action="store_true", help="Print only the report digest"
    )
    sim_parser.add_argument("--out", help="Also write the report JSON here")

    return parser


def _configure_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def _genesis_hash(text: Optional[str]) -> Optional[Hash256]:
    if text is None:
        return None
    try:
        return Hash256.from_hex(text)
    except ValueError as e:
        raise ConfigError(f"--genesis-hash is not a 64-character hex digest: {e}") from e


def resolve_entity(state, text: str) -> AccountId:
    """Account id for an entity given by name or by 64-character hex id."""
    if len(text) == 64:
        try:
            candidate = Hash256.from_hex(text)
        except ValueError:
            candidate = None
        if candidate is not None and candidate in state.accounts:
            return candidate
    matches = state.find_by_name(text)
    if not matches:
        raise UnknownNode(f"No registered entity named {text!r}")
    if len(matches) > 1:
        raise GraphError(
            f"Name {text!r} is ambiguous ({len(matches)} entities); use the account id"
        )
    return matches[0]


def _cmd_chain_build(args) -> int:
    from .config import load_genesis
    from .ledger import save_chain
    from .schedule import Schedule, build_chain, load_schedule

    genesis = load_genesis(args.genesis)
    schedule = load_schedule(args.schedule) if args.schedule else Schedule()
    chain = build_chain(genesis, schedule)
    save_chain(chain, args.out)
    print(f" Chain built: {args.out}")
    print(f"  Height: {chain.height}")
    print(f"  Tip hash: {chain.tip.header_hash.hex()}")
    print(f"  Genesis hash: {chain.header_at(0).header_hash.hex()}")
    return EXIT_OK


def _cmd_chain_verify(args) -> int:
    from .verify import verify_chain_file

    result = verify_chain_file(args.chain, _genesis_hash(args.genesis_hash))
    _print_result(result)
    return EXIT_OK if result.passed else EXIT_NEGATIVE


def _cmd_provision(args) -> int:
    from .ledger import load_chain
    from .lightclient import make_bundle, save_bundle
    from .selection import ViewSpec, build_view
    from .trustgraph import build_trust_graph

    chain = load_chain(args.chain)
    owner = resolve_entity(chain.state, args.owner)
    graph = build_trust_graph(chain.state, chain.params.m)
    spec = ViewSpec(owner, args.k_out, args.k_in)
    bundle = make_bundle(chain, graph, spec)
    size = save_bundle(bundle, args.out)
    view = build_view(graph, spec)
    print(f" Bundle written: {args.out}")
    print(f"  Owner: {chain.state.accounts[owner].name} ({owner.hex()})")
    print(f"  Nodes: {len(view.nodes)}")
    print(f"  Edges: {len(view.edges)}")
    print(f"  Transactions: {len(bundle.txs)}")
    print(f"  Bytes: {size}")
    return EXIT_OK


def _cmd_bundle_verify(args) -> int:
    from .verify import verify_bundle_file

    result = verify_bundle_file(args.bundle, _genesis_hash(args.genesis_hash))
    _print_result(result)
    return EXIT_OK if result.passed else EXIT_NEGATIVE


def _cmd_path(args) -> int:
    from .ledger import load_chain
    from .trustgraph import build_trust_graph, find_valid_path

    chain = load_chain(args.chain)
    source = resolve_entity(chain.state, args.source)
    target = resolve_entity(chain.state, args.target)
    graph = build_trust_graph(chain.state, chain.params.m)
    path = find_valid_path(graph, source, target)
    if path is None:
        print("none")
        return EXIT_NEGATIVE
    names = {aid: record.name for aid, record in graph.nodes.items()}
    print(path.describe(names))
    return EXIT_OK


def _cmd_sim(args) -> int:
    from .simnet import load_scenario, run_scenario

    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    report = run_scenario(scenario)
    report_dict = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(report_dict, indent=2, sort_keys=True))
    if args.digest_only:
        print(report.digest.hex())
    else:
        print(json.dumps(report_dict, indent=2, sort_keys=True))
    return EXIT_OK if report.all_matched else EXIT_NEGATIVE


_COMMANDS = {
    "chain-build": _cmd_chain_build,
    "chain-verify": _cmd_chain_verify,
    "provision": _cmd_provision,
    "bundle-verify": _cmd_bundle_verify,
    "path": _cmd_path,
    "sim": _cmd_sim,
}


def main(argv: Optional[List[str]] = None):
    """Main CLI entry point."""
    parser = _build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_INPUT)

    _configure_logging(args.verbose)
    try:
        code = _COMMANDS[args.command](args)
    except TrustLedgerError as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        code = EXIT_INPUT
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        code = EXIT_INPUT
    sys.exit(code)


def _print_result(result):
    """Print verification result."""
    print(f"\n{'=' * 60}")
    print(f"Outcome: {result.outcome.value}")
    print(f"{'=' * 60}")

    for key, value in result.details.items():
        print(f"  {key}: {value}")

    if result.errors:
        print("\n Errors:")
        for err in result.errors:
            print(f"  • {err}")

    if result.inconclusive_reasons:
        print("\n Inconclusive:")
        for reason in result.inconclusive_reasons:
            print(f"  • {reason}")

    if result.warnings:
        print("\n Warnings:")
        for warn in result.warnings:
            print(f"  • {warn}")

    if result.passed:
        print("\n All checks passed")


if __name__ == "__main__":
    main()
