"""Seeded traffic simulation: tree-scheme verification versus a flat CRL.

Vehicles move through an abstract grid of RSU coverage cells; encounters
between radio-equipped vehicles trigger status queries that the cell RSU
answers with a revocation proof or a signed OK. The flat-list baseline is
charged over the identical query log: one full list download per querying
vehicle per epoch. Identical (config, seed) pairs produce byte-identical
reports; nothing depends on wall clock, address ordering, or hash seeds.
"""

from __future__ import annotations

import math
import random
import struct
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .authenticity import serialize_ok, serialize_proof
from .errors import ConfigInvalid
from .protocol import (
    MSG_DELTA,
    MSG_IMPEACH,
    MSG_OK,
    MSG_PROOF,
    MSG_QUERY,
    MSG_RELOAD,
    MSG_RSU_REVOKED,
    ObuNode,
    OkResponse,
    PseudonymGroup,
    RevocationProof,
    RsuNode,
    TtpNode,
    encode_envelope,
    encode_impeachment_payload,
    encode_update_payload,
)
from .tree import DEFAULT_RSU_MEMORY_BITS, SerialNumber, choose_k

TTP_ID = 0xFFFF_FFFF


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation inputs; power/energy fields are carried but unused."""

    n_vehicles: int = 1349
    obu_penetration_percent: int = 100
    sim_duration_s: int = 1000
    area_km2: float = 25.0
    revocation_rate_percent: float = 10.0
    n_rsus: int = 25
    rsu_cell_layout: tuple = (5, 5)
    speed_range_mps: tuple = (0.0, 33.0)
    tx_range_m: float = 55.0
    query_rate: float = 0.35
    pseudonyms_per_obu: int = 5
    trust_threshold: int = 3
    ok_max_age_s: int = 60
    tick_s: int = 10
    cheating_rsus: int = 0
    crl_epoch_s: int = 0  # 0: one download per simulation
    cert_bits: int = 224
    sig_bits: int = 224
    rsu_memory_bits: int = DEFAULT_RSU_MEMORY_BITS
    tx_power_mw: float = 1.4
    rx_power_mw: float = 0.9
    sense_power_mw: float = 0.00000175
    idle_power_mw: float = 0.0
    initial_energy_j: float = 75.0
    rng_seed: int = 1

    def validate(self) -> None:
        if self.n_vehicles < 0:
            raise ConfigInvalid("n_vehicles must be >= 0")
        if not 0 <= self.obu_penetration_percent <= 100:
            raise ConfigInvalid("obu_penetration_percent must be in [0, 100]")
        if not 0 <= self.revocation_rate_percent <= 100:
            raise ConfigInvalid("revocation_rate_percent must be in [0, 100]")
        if self.sim_duration_s <= 0 or self.tick_s <= 0:
            raise ConfigInvalid("durations must be positive")
        if self.area_km2 <= 0 or self.tx_range_m <= 0:
            raise ConfigInvalid("geometry must be positive")
        gx, gy = self.rsu_cell_layout
        if gx * gy != self.n_rsus or self.n_rsus < 1:
            raise ConfigInvalid("rsu_cell_layout must multiply out to n_rsus")
        if self.cheating_rsus >= self.n_rsus and self.n_rsus > 0 and self.cheating_rsus > 0:
            raise ConfigInvalid("at least one honest RSU is required")
        if not 0 <= self.query_rate <= 1:
            raise ConfigInvalid("query_rate must be in [0, 1]")
        if self.pseudonyms_per_obu < 1 or self.trust_threshold < 1:
            raise ConfigInvalid("counts must be positive")
        lo, hi = self.speed_range_mps
        if lo < 0 or hi < lo:
            raise ConfigInvalid("speed range must be 0 <= lo <= hi")


@dataclass
class Metrics:
    """Per-run counters; the CSV columns are the first nine fields."""

    seed: int
    penetration: int
    queries: int = 0
    proof_bytes: int = 0
    ok_bytes: int = 0
    delta_bytes: int = 0
    crl_bytes: int = 0
    impeachments: int = 0
    runtime_ms: int = 0
    proof_answers: int = 0
    ok_answers: int = 0
    suppressed_queries: int = 0
    refused_no_rsu: int = 0
    dropped_answers: int = 0
    crossover_query_count: int | None = None
    tree_k: int = 0
    tree_leaves: int = 0


CSV_COLUMNS = (
    "seed", "penetration", "queries", "proof_bytes", "ok_bytes",
    "delta_bytes", "crl_bytes", "impeachments", "runtime_ms",
)


def emit_report(metrics_list, include_timing: bool = False) -> str:
    """CSV with one row per run, sorted by penetration then seed.

    Timing is zeroed by default so identical (config, seed) inputs yield
    byte-identical output; pass include_timing=True for real wall-clock.
    """
    if not metrics_list:
        raise ValueError("need at least one metrics record")
    lines = [",".join(CSV_COLUMNS)]
    for m in sorted(metrics_list, key=lambda m: (m.penetration, m.seed)):
        values = [getattr(m, col) for col in CSV_COLUMNS]
        if not include_timing:
            values[CSV_COLUMNS.index("runtime_ms")] = 0
        lines.append(",".join(str(v) for v in values))
    return "\n".join(lines) + "\n"


def parse_report(text: str):
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or tuple(lines[0].split(",")) != CSV_COLUMNS:
        raise ValueError("bad report header")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        out.append({col: int(cell) for col, cell in zip(CSV_COLUMNS, cells)})
    return out


# -- CRL baseline -------------------------------------------------------------


def crl_size_bits(s: int, cert_bits: int = 224) -> int:
    """Flat revocation list size: one cert_bits entry per revoked serial."""
    if s < 0:
        raise ValueError("s must be >= 0")
    return s * cert_bits


def crl_baseline_bytes(event_log, s: int, cert_bits: int = 224, sig_bits: int = 224,
                       epoch_s: int = 0) -> int:
    """Bytes the flat-list scheme would ship over the same query log.

    Each vehicle's first query in an epoch costs a full list download plus
    a signature; later queries in the epoch are free. epoch_s=0 means one
    epoch spanning the whole run.
    """
    download_bits = crl_size_bits(s, cert_bits) + sig_bits
    download_bytes = -(-download_bits // 8)
    seen = set()
    total = 0
    for when, vehicle in event_log:
        epoch = 0 if epoch_s <= 0 else when // epoch_s
        key = (vehicle, epoch)
        if key not in seen:
            seen.add(key)
            total += download_bytes
    return total


def proof_size_bits(k: int, depth: int, l_bits: int = 224, n_bits: int = 224,
                    child_counts=None, sig_bits: int = 224) -> int:
    """Closed-form proof payload: root digest + per-level child blocks + signature.

    For a full tree this is n + depth*k*l + sig. Envelope overhead (magic,
    counts, serial, digits) is excluded.
    """
    if child_counts is None:
        child_counts = [k] * depth
    if len(child_counts) != depth or any(not 1 <= c <= k for c in child_counts):
        raise ValueError("child_counts must give 1..k children for each level")
    return n_bits + l_bits * sum(child_counts) + sig_bits


# -- scenario files -----------------------------------------------------------


def _parse_pair(text: str, cast, sep: str):
    parts = text.split(sep)
    if len(parts) != 2:
        raise ConfigInvalid(f"expected two values separated by {sep!r}: {text!r}")
    return (cast(parts[0]), cast(parts[1]))


_FIELD_PARSERS = {
    "rsu_cell_layout": lambda v: _parse_pair(v, int, "x"),
    "speed_range_mps": lambda v: _parse_pair(v, float, ","),
}


def parse_scenario(text: str) -> ScenarioConfig:
    """Flat key=value scenario file; keys are ScenarioConfig field names."""
    known = {f.name: f for f in fields(ScenarioConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _FIELD_PARSERS:
                values[key] = _FIELD_PARSERS[key](val)
            else:
                caster = known[key].type
                cast = int if caster == "int" else float
                values[key] = cast(val)
        except (ValueError, ConfigInvalid) as exc:
            raise ConfigInvalid(f"line {lineno}: {exc}") from None
    config = ScenarioConfig(**values)
    config.validate()
    return config


def format_scenario(config: ScenarioConfig) -> str:
    lines = []
    for f in fields(ScenarioConfig):
        v = getattr(config, f.name)
        if f.name == "rsu_cell_layout":
            v = f"{v[0]}x{v[1]}"
        elif f.name == "speed_range_mps":
            v = f"{v[0]},{v[1]}"
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


# -- population helpers --------------------------------------------------------


def pseudonym_serial(vehicle_id: int, idx: int) -> bytes:
    # 28-byte serial, deterministic and hash-seed independent.
    return b"PSN" + struct.pack(">IB", vehicle_id, idx) + b"\x00" * 20


def _pair_gate(seed: int, a: int, b: int, rate: float) -> bool:
    if rate >= 1.0:
        return True
    if rate <= 0.0:
        return False
    mixed = (seed * 1_000_003 + a) * 1_000_003 + b
    return random.Random(mixed).random() < rate


class _ReplayLog:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.chunks = []

    def add(self, msg_type, sender, receiver, now, payload: bytes):
        if self.enabled:
            self.chunks.append(encode_envelope(msg_type, sender, receiver, now, payload))

    def data(self) -> bytes:
        return b"".join(self.chunks)


# -- main run -------------------------------------------------------------------


def run_simulation(config: ScenarioConfig, seed: int | None = None,
                   collect_replay: bool = False):
    """Run one scenario; returns Metrics (and the replay log when asked).

    Deterministic for a fixed (config, seed): same movement, same queries,
    same bytes. Every proof and OK produced is verified on receipt and the
    run aborts on any verification failure.
    """
    config.validate()
    seed = config.rng_seed if seed is None else seed
    start = time.perf_counter()
    metrics = Metrics(seed=seed, penetration=config.obu_penetration_percent)
    replay = _ReplayLog(collect_replay)

    n = config.n_vehicles
    if n == 0:
        metrics.runtime_ms = int((time.perf_counter() - start) * 1000)
        return (metrics, replay.data()) if collect_replay else metrics

    # population: nested OBU subset so penetration sweeps share trajectories
    order = random.Random(seed).sample(range(n), n)
    obu_count = round(n * config.obu_penetration_percent / 100)
    obu_vehicles = sorted(order[:obu_count])

    gamma = config.pseudonyms_per_obu
    revoked_serial_target = math.ceil(n * config.revocation_rate_percent / 100)
    revoked_vehicle_count = min(n, math.ceil(revoked_serial_target / gamma))
    revoked_vehicles = sorted(
        random.Random(seed ^ 0x5EEDFACE).sample(range(n), n)[:revoked_vehicle_count]
    )

    expiry = config.sim_duration_s + 1_000_000  # inert by default
    expected_s = revoked_vehicle_count * gamma
    k = choose_k(max(1, expected_s), config.rsu_memory_bits)

    scheme_seed = struct.pack(">Q", seed)
    ttp = TtpNode(k=k, seed=scheme_seed)
    gx, gy = config.rsu_cell_layout
    cheater_ids = sorted(random.Random(seed ^ 0x0C4EA7).sample(range(config.n_rsus),
                                                               config.cheating_rsus))
    rsus = {}
    for rid in range(config.n_rsus):
        rsu = RsuNode(rid, k, scheme_seed, ttp.verify_key, cheating=rid in cheater_ids)
        rsus[rid] = rsu
        ttp.register_rsu(rid, rsu.verify_key)

    for v in range(n):
        group = PseudonymGroup(
            v, tuple(SerialNumber(pseudonym_serial(v, i), expiry) for i in range(gamma))
        )
        ttp.register_group(group)

    def distribute(updates, now):
        for rid, update in updates:
            payload = encode_update_payload(update)
            metrics.delta_bytes += len(payload)
            mtype = MSG_RELOAD if update.full_tree is not None else MSG_DELTA
            replay.add(mtype, TTP_ID, rid, now, payload)
            rsus[rid].apply_update(update)

    for v in revoked_vehicles:
        distribute(ttp.revoke_obu(v, 0), 0)
    if not revoked_vehicles:
        # RSUs still need a signed (empty) tree to answer queries
        distribute([(rid, _empty_update(ttp)) for rid in ttp.rsus], 0)

    metrics.tree_k = k
    metrics.tree_leaves = ttp.tree.size
    revoked_serial_set = {leaf.serial for leaf in ttp.tree.leaves}

    rsu_keys = {rid: rsu.verify_key for rid, rsu in rsus.items()}
    obus = {
        v: ObuNode(v, ttp.verify_key, rsu_keys,
                   trust_threshold=config.trust_threshold,
                   ok_max_age=config.ok_max_age_s)
        for v in obu_vehicles
    }

    # mobility (computed for the full population, independent of penetration)
    side = math.sqrt(config.area_km2) * 1000.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAB1E]))
    pos = rng.random((n, 2)) * side
    lo, hi = config.speed_range_mps
    speed = rng.uniform(lo, hi, n)
    heading = rng.uniform(0.0, 2.0 * math.pi, n)

    obu_arr = np.array(obu_vehicles, dtype=np.int64)
    active_pseudonym = {v: pseudonym_serial(v, 0) for v in obu_vehicles}
    event_log = []
    gate_cache = {}
    tree_cumulative = 0
    crl_seen = set()
    crl_cumulative = 0
    download_bytes = -(-(crl_size_bits(len(revoked_serial_set), config.cert_bits)
                         + config.sig_bits) // 8)

    def cell_of(x: float, y: float) -> int:
        cx = min(int(x / side * gx), gx - 1)
        cy = min(int(y / side * gy), gy - 1)
        return cx + gx * cy

    n_steps = config.sim_duration_s // config.tick_s
    for step in range(n_steps):
        now = step * config.tick_s
        # motion
        if step:
            vel = np.stack([np.cos(heading), np.sin(heading)], axis=1) * speed[:, None]
            pos += vel * config.tick_s
            for axis in range(2):
                line = pos[:, axis]
                over = line > side
                under = line < 0.0
                line[over] = 2.0 * side - line[over]
                line[under] = -line[under]
                bounced = over | under
                heading[bounced] = (math.pi - heading[bounced]) if axis == 0 else -heading[bounced]
            turn = rng.random(n) < 0.2
            heading[turn] = rng.uniform(0.0, 2.0 * math.pi, int(turn.sum()))

        distribute(ttp.periodic_update(now), now)

        if obu_arr.size == 0:
            continue
        # encounters among radio-equipped vehicles, bucketed by tx range
        cell_size = config.tx_range_m
        coords = np.floor(pos[obu_arr] / cell_size).astype(np.int64)
        buckets = {}
        for row, v in enumerate(obu_vehicles):
            buckets.setdefault((coords[row, 0], coords[row, 1]), []).append(row)
        tx2 = config.tx_range_m**2
        pairs = []
        for (cx, cy), rows in sorted(buckets.items()):
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    other = buckets.get((cx + dx, cy + dy))
                    if other is None:
                        continue
                    for i in rows:
                        for j in other:
                            if j <= i:
                                continue
                            d = pos[obu_arr[i]] - pos[obu_arr[j]]
                            if d[0] * d[0] + d[1] * d[1] <= tx2:
                                pairs.append((i, j))
        pairs.sort()

        for i, j in pairs:
            for a_row, b_row in ((i, j), (j, i)):
                a = obu_vehicles[a_row]
                b = obu_vehicles[b_row]
                gate_key = (a, b)
                gate = gate_cache.get(gate_key)
                if gate is None:
                    gate = _pair_gate(seed, a, b, config.query_rate)
                    gate_cache[gate_key] = gate
                if not gate:
                    continue
                serial = active_pseudonym[b]
                obu = obus[a]
                if obu.precheck(serial) != "unknown":
                    metrics.suppressed_queries += 1
                    continue
                rid = cell_of(pos[a, 0], pos[a, 1])
                if rid in ttp.revoked_rsus:
                    metrics.refused_no_rsu += 1
                    continue
                if obu.asked_before(serial, rid):
                    continue
                metrics.queries += 1
                event_log.append((now, a))
                replay.add(MSG_QUERY, a, rid, now, serial)
                epoch = 0 if config.crl_epoch_s <= 0 else now // config.crl_epoch_s
                if (a, epoch) not in crl_seen:
                    crl_seen.add((a, epoch))
                    crl_cumulative += download_bytes
                answer = rsus[rid].answer_query(serial, now)
                if isinstance(answer, RevocationProof):
                    payload = serialize_proof(answer)
                    metrics.proof_bytes += len(payload)
                    metrics.proof_answers += 1
                    replay.add(MSG_PROOF, rid, a, now, payload)
                elif isinstance(answer, OkResponse):
                    payload = serialize_ok(answer)
                    metrics.ok_bytes += len(payload)
                    metrics.ok_answers += 1
                    replay.add(MSG_OK, rid, a, now, payload)
                else:
                    raise RuntimeError("RSU returned neither proof nor OK")
                tree_cumulative += len(payload)
                if metrics.crossover_query_count is None and crl_cumulative > tree_cumulative:
                    metrics.crossover_query_count = metrics.queries

                actions = obu.handle_answer(answer, rid, now)
                for kind, payload_obj in actions:
                    if kind == "drop":
                        raise RuntimeError(
                            f"answer from RSU {rid} failed verification at OBU {a}"
                        )
                    if kind == "impeach":
                        imp_bytes = encode_impeachment_payload(payload_obj)
                        replay.add(MSG_IMPEACH, a, rid, now, imp_bytes)
                        try:
                            notices = ttp.handle_impeachment(payload_obj, now)
                        except Exception:
                            notices = []
                        for notice in notices:
                            metrics.impeachments += 1
                            body = struct.pack(">IQ", notice.rsu_id, notice.tree_version)
                            for ov, onode in obus.items():
                                replay.add(MSG_RSU_REVOKED, TTP_ID, ov, now, body)
                                onode.handle_revoked_rsu(notice)

    metrics.crl_bytes = crl_baseline_bytes(
        event_log, len(revoked_serial_set), config.cert_bits, config.sig_bits,
        config.crl_epoch_s,
    )
    assert metrics.crl_bytes == crl_cumulative
    metrics.dropped_answers = sum(o.dropped for o in obus.values())

    # invariant: nobody trusts a revoked serial as reliable
    for obu in obus.values():
        for serial in obu.reliable:
            if serial in revoked_serial_set:
                raise RuntimeError("revoked serial cached as reliable")

    metrics.runtime_ms = int((time.perf_counter() - start) * 1000)
    return (metrics, replay.data()) if collect_replay else metrics


def _empty_update(ttp: TtpNode):
    from .protocol import TreeUpdate
    from .tree import serialize_tree

    return TreeUpdate(signed_root=ttp.signed_root, full_tree=serialize_tree(ttp.tree))


def sweep_penetrations(config: ScenarioConfig, penetrations, seeds):
    """Run the scenario across penetration levels and seeds."""
    out = []
    for seed in seeds:
        for pen in penetrations:
            cfg = replace(config, obu_penetration_percent=pen)
            out.append(run_simulation(cfg, seed=seed))
    return out


# -- adversarial protocol scenario ---------------------------------------------


@dataclass(frozen=True)
class AdversarialResult:
    cheater_revoked: bool
    impeachments: int
    queries: int
    revoked_cached_reliable: int
    cheating_rsu_id: int


def run_adversarial_scenario(seed: int, n_obus: int = 6, n_rsus: int = 4,
                             trust_threshold: int = 3, steps: int = 60,
                             n_targets: int = 6, n_revoked: int = 3,
                             n_cheating: int = 1) -> AdversarialResult:
    """One cheating RSU among honest ones; OBUs roam and cross-check answers.

    The cheater answers OK for everything, including revoked serials; the
    first OBU that later receives a contradicting proof files an
    impeachment through the honest responder. n_cheating=0 gives the
    all-honest control run.
    """
    rng = random.Random(seed)
    scheme_seed = struct.pack(">Q", seed)
    ttp = TtpNode(k=3, seed=scheme_seed)
    cheater_id = 0 if n_cheating else -1
    rsus = {}
    for rid in range(n_rsus):
        rsu = RsuNode(rid, 3, scheme_seed, ttp.verify_key, cheating=rid < n_cheating)
        rsus[rid] = rsu
        ttp.register_rsu(rid, rsu.verify_key)
    for v in range(n_targets):
        ttp.register_group(
            PseudonymGroup(v, (SerialNumber(pseudonym_serial(v, 0), 10**9),))
        )

    def distribute(updates):
        for rid, update in updates:
            rsus[rid].apply_update(update)

    for v in range(n_revoked):
        distribute(ttp.revoke_obu(v, 0))

    revoked_set = {pseudonym_serial(v, 0) for v in range(n_revoked)}
    targets = [pseudonym_serial(v, 0) for v in range(n_targets)]
    rsu_keys = {rid: rsu.verify_key for rid, rsu in rsus.items()}
    obus = [
        ObuNode(100 + i, ttp.verify_key, rsu_keys, trust_threshold=trust_threshold,
                ok_max_age=10**9)
        for i in range(n_obus)
    ]

    impeachments = 0
    queries = 0
    for step in range(steps):
        now = step
        for i, obu in enumerate(obus):
            # first round sweeps every (vehicle, cell) pair deterministically;
            # afterwards each vehicle cycles through the RSUs on its route
            rid = (i if step == 0 else (i + step)) % n_rsus
            if rid in ttp.revoked_rsus:
                continue
            # ask-again comes first: retry pending serials at a new responder
            serial = None
            for pending_serial in obu.pending:
                if not obu.asked_before(pending_serial, rid):
                    serial = pending_serial
                    break
            if serial is None:
                serial = targets[i % len(targets)] if step == 0 else targets[
                    rng.randrange(len(targets))
                ]
            if obu.precheck(serial) != "unknown":
                continue
            if obu.asked_before(serial, rid):
                continue
            queries += 1
            answer = rsus[rid].answer_query(serial, now)
            for kind, payload in obu.handle_answer(answer, rid, now):
                if kind == "drop":
                    raise RuntimeError("honest answer failed verification")
                if kind == "impeach":
                    try:
                        notices = ttp.handle_impeachment(payload, now)
                    except Exception:
                        notices = []
                    for notice in notices:
                        impeachments += 1
                        for o in obus:
                            o.handle_revoked_rsu(notice)

    bad = sum(
        1 for obu in obus for serial in obu.reliable if serial in revoked_set
    )
    return AdversarialResult(
        cheater_revoked=cheater_id in ttp.revoked_rsus,
        impeachments=impeachments,
        queries=queries,
        revoked_cached_reliable=bad,
        cheating_rsu_id=cheater_id,
    )
