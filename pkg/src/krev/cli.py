"""Command-line front end.

Subcommands: build, insert, delete, prove, verify, choose-k, simulate, bench.
Exit codes: 0 success, 1 verification failure / not revoked, 2 usage or
input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import keccak
from .authenticity import (
    SigningKey,
    VerifyKey,
    build_proof,
    serialize_proof,
    sign_root,
    verify_proof_bytes,
)
from .errors import (
    ConfigInvalid,
    DuplicateSerial,
    FormatError,
    Infeasible,
    KrevError,
    UnknownSerial,
)
from .sim import (
    ScenarioConfig,
    emit_report,
    parse_scenario,
    proof_size_bits,
    run_simulation,
)
from .tree import (
    choose_k,
    depth_for,
    deserialize_tree,
    proof_path_bits,
    serialize_tree,
    tree_from_serials,
    tree_size_bits,
)

DEFAULT_EXPIRY = 2**62


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _read_serial_file(path: str):
    """Lines of serial_hex[,expiry_unix]; blank lines and # comments ignored."""
    entries = []
    seen = {}
    try:
        text = open(path, "r", encoding="ascii").read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        serial_hex, _, expiry_text = line.partition(",")
        try:
            value = bytes.fromhex(serial_hex.strip())
        except ValueError:
            raise CliError(f"line {lineno}: bad hex serial")
        if not value:
            raise CliError(f"line {lineno}: empty serial")
        expiry = DEFAULT_EXPIRY
        if expiry_text.strip():
            try:
                expiry = int(expiry_text.strip())
            except ValueError:
                raise CliError(f"line {lineno}: bad expiry")
        if value in seen:
            raise CliError(f"line {lineno}: duplicate serial (first seen on line {seen[value]})")
        seen[value] = lineno
        entries.append((value, expiry))
    return entries


def _read_key(path: str) -> bytes:
    try:
        text = open(path, "r", encoding="ascii").read()
    except OSError as exc:
        raise CliError(f"cannot read key file {path}: {exc}")
    try:
        secret = bytes.fromhex(text.strip())
    except ValueError:
        raise CliError(f"key file {path} must contain hex")
    if len(secret) < 8:
        raise CliError("key must be at least 8 bytes")
    return secret


def _read_tree(path: str):
    try:
        data = open(path, "rb").read()
    except OSError as exc:
        raise CliError(f"cannot read tree file {path}: {exc}")
    try:
        return deserialize_tree(data)
    except FormatError as exc:
        raise CliError(f"bad tree file {path}: {exc}")


def _parse_serial(text: str) -> bytes:
    try:
        value = bytes.fromhex(text)
    except ValueError:
        raise CliError("serial must be hex")
    if not value:
        raise CliError("serial must be non-empty")
    return value


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_build(args) -> int:
    entries = _read_serial_file(args.input)
    tree = tree_from_serials(entries, args.k, args.l_bits)
    open(args.out, "wb").write(serialize_tree(tree))
    _say(args, f"s={tree.size} D={tree.depth} root={tree.root_digest.hex()}")
    return 0


def cmd_insert(args) -> int:
    tree = _read_tree(args.tree)
    try:
        report = tree.insert(_parse_serial(args.serial), args.expiry)
    except DuplicateSerial:
        raise CliError("serial already present")
    open(args.out or args.tree, "wb").write(serialize_tree(tree))
    _say(args, f"version={report.version} changed={len(report.changed)} "
               f"s={tree.size} D={tree.depth} root={tree.root_digest.hex()}")
    return 0


def cmd_delete(args) -> int:
    tree = _read_tree(args.tree)
    try:
        report = tree.delete(_parse_serial(args.serial))
    except UnknownSerial:
        raise CliError("serial not present")
    open(args.out or args.tree, "wb").write(serialize_tree(tree))
    _say(args, f"version={report.version} s={tree.size} D={tree.depth} "
               f"root={tree.root_digest.hex()}")
    return 0


def cmd_prove(args) -> int:
    tree = _read_tree(args.tree)
    secret = _read_key(args.ttp_key)
    signed = sign_root(tree, SigningKey(secret, args.signer_id), args.timestamp)
    proof = build_proof(tree, _parse_serial(args.serial), signed)
    if proof is None:
        _say(args, "NOT-REVOKED")
        return 1
    blob = serialize_proof(proof)
    open(args.out, "wb").write(blob)
    _say(args, f"proof bytes={len(blob)}")
    return 0


def cmd_verify(args) -> int:
    try:
        blob = open(args.proof, "rb").read()
    except OSError as exc:
        raise CliError(f"cannot read proof {args.proof}: {exc}")
    secret = _read_key(args.ttp_key)
    result = verify_proof_bytes(blob, VerifyKey(secret, args.signer_id))
    if result.accepted:
        _say(args, "Accept")
        return 0
    _say(args, f"Reject({result.reason})")
    return 1


def cmd_choose_k(args) -> int:
    try:
        k = choose_k(args.s, args.memory_bits)
    except (Infeasible, ValueError) as exc:
        raise CliError(f"infeasible: {exc}")
    depth = depth_for(args.s, k)
    _say(args, f"k={k} D={depth} proof_bits={proof_path_bits(k, depth)} "
               f"tree_bits={tree_size_bits(k, depth)} "
               f"proof_bits_with_sig={proof_size_bits(k, depth)}")
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        try:
            config = parse_scenario(open(args.config, "r", encoding="ascii").read())
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}")
    else:
        config = ScenarioConfig()
    seed = args.seed if args.seed is not None else config.rng_seed
    if args.penetrations:
        try:
            levels = [int(p) for p in args.penetrations.split(",")]
        except ValueError:
            raise CliError("penetrations must be comma-separated integers")
    else:
        levels = [config.obu_penetration_percent]
    metrics = []
    replay_chunks = []
    for pen in levels:
        cfg = dataclasses.replace(config, obu_penetration_percent=pen)
        if args.replay_out:
            m, log = run_simulation(cfg, seed=seed, collect_replay=True)
            replay_chunks.append(log)
        else:
            m = run_simulation(cfg, seed=seed)
        metrics.append(m)
        _say(args, f"penetration={pen} queries={m.queries} "
                   f"tree_bytes={m.proof_bytes + m.ok_bytes} crl_bytes={m.crl_bytes}")
    csv = emit_report(metrics, include_timing=args.timing)
    open(args.csv_out, "w", encoding="ascii").write(csv)
    if args.replay_out:
        open(args.replay_out, "wb").write(b"".join(replay_chunks))
    _say(args, f"wrote {args.csv_out}")
    return 0


def cmd_bench(args) -> int:
    from .bench import format_rows, run_benchmarks

    rows = run_benchmarks(
        permute_repeat=args.repeat, insert_count=args.inserts,
    )
    print(format_rows(rows))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krev",
        description="k-ary revocation tree over a duplex Keccak-f[800] hash",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress normal output")
    parser.add_argument("--seed", type=int, default=None, help="override scenario seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a tree from a serial list")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l-bits", type=int, default=keccak.DEFAULT_L_BITS)
    p.add_argument("--input", required=True, help="serial_hex[,expiry] per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("insert", help="insert one serial into a tree file")
    p.add_argument("--tree", required=True)
    p.add_argument("--serial", required=True)
    p.add_argument("--expiry", type=int, default=DEFAULT_EXPIRY)
    p.add_argument("--out", default=None, help="defaults to rewriting --tree")
    p.set_defaults(func=cmd_insert)

    p = sub.add_parser("delete", help="delete one serial from a tree file")
    p.add_argument("--tree", required=True)
    p.add_argument("--serial", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("prove", help="write a revocation proof for a serial")
    p.add_argument("--tree", required=True)
    p.add_argument("--serial", required=True)
    p.add_argument("--ttp-key", required=True, help="hex secret file")
    p.add_argument("--signer-id", type=int, default=1)
    p.add_argument("--timestamp", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("verify", help="verify a proof file")
    p.add_argument("--proof", required=True)
    p.add_argument("--ttp-key", required=True)
    p.add_argument("--signer-id", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("choose-k", help="pick the branching factor for s and memory")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--memory-bits", type=int, required=True)
    p.set_defaults(func=cmd_choose_k)

    p = sub.add_parser("simulate", help="run the seeded traffic simulation")
    p.add_argument("--config", default=None, help="key=value scenario file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="override scenario seed")
    p.add_argument("--csv-out", required=True)
    p.add_argument("--penetrations", default=None, help="comma list, e.g. 10,20,30")
    p.add_argument("--replay-out", default=None, help="write the message envelope log")
    p.add_argument("--timing", action="store_true", help="record real runtime_ms in the CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="compare the numba and numpy kernel backends")
    p.add_argument("--repeat", type=int, default=2000)
    p.add_argument("--inserts", type=int, default=1500)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigInvalid, Infeasible, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KrevError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
