"""Operator-facing commands: serve a model, query it, optimize, benchmark.

Reports are JSON lines (machine-diffable); human summaries go to stderr.
All commands are deterministic under --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from .clustering import ClusterConfig, cluster_nodes, cluster_paths
from .fhe import FheParams
from .forest import eval_scores, load_model, predict_from_scores, quantize, save_model
from .protocol import Client, LoopbackChannel, ServerEngine, TcpChannel, TcpServer

VALID_BITWIDTHS = (8, 16, 32)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _params_from_config(cfg: dict) -> FheParams:
    return FheParams.default(
        slot_count=int(cfg.get("slot_count", 1 << 13)),
        min_plain_modulus=int(cfg.get("min_plain_modulus", 1 << 20)),
        depth_budget=int(cfg.get("depth_budget", 32)),
    )


def _read_rows(path: str) -> tuple[list[str], list[dict[str, float]], list]:
    """CSV rows as {feature: value}; a 'label' column is split off if present."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = [c for c in reader.fieldnames if c != "label"]
        rows, labels = [], []
        for record in reader:
            rows.append({name: float(record[name]) for name in names})
            labels.append(record.get("label"))
    return names, rows, labels


def _emit(report: dict, report_path: str | None) -> None:
    line = json.dumps(report)
    if report_path:
        with open(report_path, "a") as fh:
            fh.write(line + "\n")
    else:
        print(line)


def _bitwidth(args, cfg) -> int:
    value = args.bitwidth if args.bitwidth is not None else int(cfg.get("bitwidth", 8))
    if value not in VALID_BITWIDTHS:
        raise SystemExit(f"bitwidth must be one of {VALID_BITWIDTHS}, got {value}")
    return value


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_server(args) -> int:
    cfg = _load_config(args.config)
    forest = load_model(args.model)
    engine = ServerEngine(
        forest, params=_params_from_config(cfg), bitwidth=_bitwidth(args, cfg),
        seed=args.seed,
    )
    host, _, port = args.listen.partition(":")
    server = TcpServer(engine, host or "127.0.0.1", int(port or 0)).start()
    print(f"serving {args.model} on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_client(args) -> int:
    cfg = _load_config(args.config)
    _, rows, _ = _read_rows(args.query)
    if not 0 <= args.row < len(rows):
        raise SystemExit(f"row {args.row} out of range ({len(rows)} rows)")
    host, _, port = args.connect.partition(":")
    channel = TcpChannel(host or "127.0.0.1", int(port))
    try:
        client = Client(channel, seed=args.seed)
        started = time.perf_counter()
        result = client.infer(rows[args.row])
        elapsed = time.perf_counter() - started
    finally:
        channel.close()
    report = {
        "kind": "client",
        "row": args.row,
        "predicted_class": result.predicted_class,
        "class_scores": list(result.class_scores),
        "exchanges": _count_exchanges(client.transcript),
        "wall_seconds": round(elapsed, 6),
        "server_ops": result.ops,
    }
    _emit(report, args.report)
    print(
        f"row {args.row}: class {result.predicted_class} "
        f"(scores {list(result.class_scores)}) in {elapsed:.3f}s",
        file=sys.stderr,
    )
    return 0


def _count_exchanges(transcript) -> int:
    # the BCC challenge/response pair counts as one exchange
    sends = sum(1 for direction, _ in transcript if direction == "send")
    recvs = sum(1 for direction, _ in transcript if direction == "recv")
    return sends + recvs - 1 if sends == 2 and recvs == 2 else sends


def cmd_optimize(args) -> int:
    cfg = _load_config(args.config)
    intensity = args.intensity if args.intensity is not None else float(cfg.get("intensity", 0.2))
    forest = load_model(args.model)
    names, rows, labels = _read_rows(args.validation)
    if any(label is None for label in labels):
        raise SystemExit("validation CSV needs a 'label' column")
    truth = [int(label) for label in labels]

    def validator(candidate) -> float:
        hits = 0
        for row, label in zip(rows, truth):
            hits += predict_from_scores(eval_scores(candidate, row)) == label
        return hits / len(rows)

    clustered, report = cluster_nodes(forest, ClusterConfig(intensity=intensity), validator)
    table = cluster_paths(clustered)
    report_doc = report.to_dict() | {
        "kind": "optimize",
        "intensity": intensity,
        "path_count": len(table.paths),
        "path_cluster_count": table.cluster_count,
    }
    if report.committed == 0:
        Path(args.output).write_bytes(Path(args.model).read_bytes())
    else:
        save_model(clustered, args.output)
    _emit(report_doc, args.report)
    print(
        f"{report.nodes_before} -> {report.nodes_after} node types, "
        f"accuracy {report.accuracy_before:.4f} -> {report.accuracy_after:.4f}, "
        f"{table.cluster_count}/{len(table.paths)} path clusters",
        file=sys.stderr,
    )
    return 0


class _MeteredChannel:
    """Loopback channel that records wire bytes per protocol phase."""

    def __init__(self, engine):
        self.inner = LoopbackChannel(engine)
        self.phase_bytes: dict[str, int] = {}

    def request(self, frame: bytes) -> bytes:
        from .protocol import decode_frame

        response = self.inner.request(frame)
        for raw in (frame, response):
            name = decode_frame(raw).type_name
            self.phase_bytes[name] = self.phase_bytes.get(name, 0) + len(raw)
        return response


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    bitwidth = _bitwidth(args, cfg)
    forest = load_model(args.model)
    engine = ServerEngine(
        forest, params=_params_from_config(cfg), bitwidth=bitwidth, seed=args.seed
    )
    channel = _MeteredChannel(engine)
    client = Client(channel, seed=args.seed)
    client.setup()

    _, rows, _ = _read_rows(args.queries)
    rows = rows[: args.limit] if args.limit else rows

    layout = engine.layout
    plane_bytes = engine.params.slot_count * 8 + 25  # slots + header, per ciphertext
    uncompressed = layout.plane_count * plane_bytes
    compressed = -(-layout.plane_count // layout.repetitions) * plane_bytes

    started = time.perf_counter()
    predictions = []
    before = engine.ledger.snapshot()
    for row in rows:
        predictions.append(client.infer(row).predicted_class)
    elapsed = time.perf_counter() - started
    ops = engine.ledger.delta(before)

    report = {
        "kind": "bench",
        "model": args.model,
        "bitwidth": bitwidth,
        "queries": len(rows),
        "predictions": predictions,
        "rotations": ops["rotations"],
        "cipher_mults": ops["cipher_mults"],
        "plain_mults": ops["plain_mults"],
        "additions": ops["additions"],
        "max_depth": ops["max_depth"],
        "plan_size": len(engine.plan),
        "path_clusters": engine.table.cluster_count,
        "paths": len(engine.table.paths),
        "query_bytes_uncompressed": uncompressed,
        "query_bytes_compressed": compressed,
        "compression_ratio": round(compressed / uncompressed, 6),
        "repetitions": layout.repetitions,
        "wire_bytes_by_phase": channel.phase_bytes,
        "wall_seconds": round(elapsed, 6),
    }
    _emit(report, args.report)
    print(
        f"{len(rows)} queries in {elapsed:.3f}s | rotations {ops['rotations']} "
        f"cmults {ops['cipher_mults']} depth {ops['max_depth']} | "
        f"query bytes {compressed}/{uncompressed} "
        f"({report['compression_ratio']:.3f})",
        file=sys.stderr,
    )
    return 0


def cmd_predict_plain(args) -> int:
    """Plaintext-mode evaluation of a model (the engine side of the
    toolkit's cross-process agreement check)."""
    forest = load_model(args.model)
    qforest = quantize(forest, args.bitwidth)
    _, rows, _ = _read_rows(args.rows)
    for index, row in enumerate(rows):
        quantized = {
            f.name: _grid(row[f.name], f.minimum, f.maximum, args.bitwidth)
            for f in qforest.features
        }
        scores = eval_scores(qforest, quantized)
        print(json.dumps({
            "row": index,
            "predicted_class": predict_from_scores(scores),
            "class_scores": [int(s) for s in scores],
        }))
    return 0


def _grid(value, lo, hi, bitwidth):
    from .encoding import quantize_to_grid

    return quantize_to_grid(value, lo, hi, bitwidth)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veilboost")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--report", help="append JSON-line reports to this path")

    p = sub.add_parser("server", help="serve a model over TCP")
    p.add_argument("--model", required=True)
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--bitwidth", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_server)

    p = sub.add_parser("client", help="submit one query row")
    p.add_argument("--connect", required=True)
    p.add_argument("--query", required=True, help="CSV with feature columns")
    p.add_argument("--row", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("optimize", help="run node clustering with the accuracy gate")
    p.add_argument("--model", required=True)
    p.add_argument("--validation", required=True, help="CSV with features + label")
    p.add_argument("--output", required=True)
    p.add_argument("--intensity", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bench", help="ledger and size report over query rows")
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--bitwidth", type=int, default=None)
    p.add_argument("--limit", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict-plain", help="plaintext-mode evaluation (oracle surface)")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", required=True)
    p.add_argument("--bitwidth", type=int, default=8)
    p.set_defaults(func=cmd_predict_plain)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
