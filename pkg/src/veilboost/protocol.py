"""Client and server state machines for the private-inference protocol.

Message flow per inference (after a one-time setup exchange):

    C -> S   QUERY          compressed encrypted bit-planes + eval key
    S -> C   BCC_CHALLENGE  padded-and-shuffled SumPath ciphertexts
    C -> S   BCC_RESPONSE   converted, freshly encrypted ciphertexts
    S -> C   RESULT         packed per-class scores

Three exchanges: the query, the conversion round, the result. The server
never holds a secret key; its backend's decrypt counter is the
instrumented witness. The client learns only the class scores and the
published frequency profile (a cap on trees and paths); transcripts for
two models sharing a profile differ only in ciphertext randomness.

Frames are length-prefixed and versioned:

    u32 BE length | u8 version | u8 type | 8-byte query id | payload | u32 LE crc32

with the checksum covering version through payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import bcc
from .clustering import cluster_paths, plan_from_clusters
from .comparison import batch_compare
from .encoding import (
    CompressedQuery,
    QueryLayout,
    compress_query,
    decompress_query,
    pack_query_planes,
)
from .fhe import (
    CipherHandle,
    EvalKey,
    FheError,
    FheParams,
    OpLedger,
    PlainVector,
    ReferenceBackend,
    SecretKey,
)
from .forest import (
    Forest,
    ModelError,
    SumPathPack,
    assign_buckets,
    leaf_plaintext,
    predict_from_scores,
    quantize,
    sum_path,
)
from .rng import DeterministicRng

__all__ = [
    "ProtocolError",
    "FrameError",
    "MSG_SETUP_REQ",
    "MSG_SETUP_RESP",
    "MSG_QUERY",
    "MSG_BCC_CHALLENGE",
    "MSG_BCC_RESPONSE",
    "MSG_RESULT",
    "MSG_ERROR",
    "encode_frame",
    "decode_frame",
    "Frame",
    "InferenceResult",
    "ServerEngine",
    "Client",
    "LoopbackChannel",
    "TcpServer",
    "TcpChannel",
]

PROTOCOL_VERSION = 1

MSG_SETUP_REQ = 1
MSG_SETUP_RESP = 2
MSG_QUERY = 3
MSG_BCC_CHALLENGE = 4
MSG_BCC_RESPONSE = 5
MSG_RESULT = 6
MSG_ERROR = 7

_TYPE_NAMES = {
    MSG_SETUP_REQ: "SETUP_REQ",
    MSG_SETUP_RESP: "SETUP_RESP",
    MSG_QUERY: "QUERY",
    MSG_BCC_CHALLENGE: "BCC_CHALLENGE",
    MSG_BCC_RESPONSE: "BCC_RESPONSE",
    MSG_RESULT: "RESULT",
    MSG_ERROR: "ERROR",
}


class ProtocolError(Exception):
    pass


class FrameError(ProtocolError):
    pass


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    msg_type: int
    query_id: bytes
    payload: bytes

    @property
    def type_name(self) -> str:
        return _TYPE_NAMES.get(self.msg_type, f"type{self.msg_type}")


def encode_frame(msg_type: int, query_id: bytes, payload: bytes) -> bytes:
    if len(query_id) != 8:
        raise FrameError("query id must be 8 bytes")
    body = struct.pack("<BB", PROTOCOL_VERSION, msg_type) + query_id + payload
    crc = struct.pack("<I", zlib.crc32(body))
    return struct.pack(">I", len(body) + 4) + body + crc


def decode_frame(raw: bytes) -> Frame:
    if len(raw) < 4 + 10 + 4:
        raise FrameError("frame too short")
    (length,) = struct.unpack_from(">I", raw)
    if length + 4 != len(raw):
        raise FrameError("frame length mismatch")
    body, crc_bytes = raw[4:-4], raw[-4:]
    if zlib.crc32(body) != struct.unpack("<I", crc_bytes)[0]:
        raise FrameError("frame checksum mismatch")
    version, msg_type = struct.unpack_from("<BB", body)
    if version != PROTOCOL_VERSION:
        raise FrameError(f"unsupported protocol version {version}")
    return Frame(msg_type, body[2:10], body[10:])


def _pack_sections(sections: list[bytes]) -> bytes:
    out = [struct.pack("<I", len(sections))]
    for sec in sections:
        out.append(struct.pack("<I", len(sec)))
        out.append(sec)
    return b"".join(out)


def _unpack_sections(payload: bytes) -> list[bytes]:
    try:
        (count,) = struct.unpack_from("<I", payload)
        sections, offset = [], 4
        for _ in range(count):
            (size,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            sections.append(payload[offset : offset + size])
            if len(sections[-1]) != size:
                raise FrameError("section truncated")
            offset += size
        return sections
    except struct.error as exc:
        raise FrameError(f"malformed payload: {exc}") from None


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


@dataclass
class _ServerSession:
    phase: str
    rng: DeterministicRng
    backend: ReferenceBackend
    pack: SumPathPack | None = None
    records: list = field(default_factory=list)
    ledger_before: dict = field(default_factory=dict)


class ServerEngine:
    """Prepared model artifacts plus per-query session handling.

    Construct from an already-clustered raw forest (run the optimizer
    offline); quantization, path clustering, the comparison plan, the
    query layout and the frequency profiles are all derived here once.
    """

    def __init__(
        self,
        forest: Forest,
        params: FheParams | None = None,
        bitwidth: int = 8,
        seed=None,
        cw_weight: int = 2,
    ):
        if not forest.trees:
            raise ModelError("cannot serve an empty forest")
        self.params = params if params is not None else FheParams.default()
        self.rng = DeterministicRng(seed).spawn("server")
        self.forest = quantize(forest, bitwidth) if not forest.quantized else forest
        self.table = cluster_paths(self.forest)
        self.plan = plan_from_clusters(self.forest)
        self.layout = QueryLayout.build(
            [(f.name, f.minimum, f.maximum) for f in self.forest.features],
            repetitions=self.plan.max_per_feature(),
            bitwidth=self.forest.bitwidth,
            params=self.params,
            weight=cw_weight,
        )
        self.plan = self.plan.with_slots(self.layout)
        self.buckets = assign_buckets(
            self.forest, self.table, self.params.slot_count // 4
        )
        self.profiles = [
            bcc.profile_for_counts(b.zero_count, b.used_slots - b.zero_count,
                                   self.params.slot_count)
            for b in self.buckets
        ]
        self._check_score_range()
        self.ledger = OpLedger()
        self.backend = ReferenceBackend(self.params, self.ledger)
        self.sessions: dict[bytes, _ServerSession] = {}

    def _check_score_range(self) -> None:
        t = self.params.plain_modulus
        bound: dict[int | None, int] = {}
        for tree in self.forest.trees:
            worst = max(abs(int(leaf.score)) for leaf in tree.leaves)
            key = tree.class_id
            bound[key] = bound.get(key, 0) + worst
        if max(bound.values()) >= t // 2:
            raise ModelError(
                "aggregate scores may exceed t/2; raise the plaintext modulus"
            )

    @property
    def decrypt_count(self) -> int:
        return self.backend.decrypt_count

    def setup_payload(self) -> bytes:
        doc = {
            "num_classes": self.forest.num_classes,
            "model_kind": self.forest.model_kind,
            "profiles": [p.to_dict() for p in self.profiles],
        }
        return _pack_sections(
            [self.params.to_bytes(), self.layout.to_json().encode(), json.dumps(doc).encode()]
        )

    # -- frame dispatch ------------------------------------------------------

    def handle_frame(self, raw: bytes) -> bytes:
        try:
            frame = decode_frame(raw)
        except FrameError as exc:
            return self._error(b"\0" * 8, "bad_frame", str(exc))
        try:
            if frame.msg_type == MSG_SETUP_REQ:
                return encode_frame(MSG_SETUP_RESP, frame.query_id, self.setup_payload())
            if frame.msg_type == MSG_QUERY:
                return self._handle_query(frame)
            if frame.msg_type == MSG_BCC_RESPONSE:
                return self._handle_bcc_response(frame)
            return self._error(frame.query_id, "unexpected_type", frame.type_name)
        except (FheError, ModelError, ProtocolError, Exception) as exc:  # noqa: BLE001
            self.sessions.pop(frame.query_id, None)
            return self._error(frame.query_id, type(exc).__name__, str(exc))

    def _error(self, query_id: bytes, code: str, message: str) -> bytes:
        payload = json.dumps({"code": code, "message": message}).encode()
        return encode_frame(MSG_ERROR, query_id, payload)

    def eval_round1(
        self, compressed: CompressedQuery, rng: DeterministicRng
    ) -> tuple[SumPathPack, list, list[CipherHandle]]:
        """Decompress, compare, SumPath, pad-and-shuffle: the full first round.

        Returns the packed SumPath, the per-bucket shuffle records, and the
        challenge ciphertexts to send for conversion.
        """
        planes = decompress_query(self.backend, compressed)
        bits = batch_compare(self.backend, planes, self.plan, self.layout)
        pack = sum_path(
            self.backend, self.forest, bits, self.table, rng.spawn("edges"),
            buckets=self.buckets,
        )
        records, challenges = [], []
        for idx, bucket in enumerate(pack.buckets):
            transcript = bcc.run_challenge(
                self.backend,
                pack.ciphertexts[idx],
                bucket.used_slots,
                bucket.zero_count,
                self.profiles[idx],
                rng.spawn(f"shuffle{idx}"),
            )
            records.append(transcript.record)
            challenges.append(transcript.c_shuffled)
        return pack, records, challenges

    def _handle_query(self, frame: Frame) -> bytes:
        if frame.query_id in self.sessions:
            raise ProtocolError(f"query id {frame.query_id.hex()} already in flight")
        sections = _unpack_sections(frame.payload)
        if len(sections) < 2:
            raise ProtocolError("query payload missing sections")
        EvalKey.from_bytes(sections[0])  # validates key bundle structure
        cts = tuple(self.backend.deserialize_ciphertext(s) for s in sections[1:])
        compressed = CompressedQuery(cts, self.layout)

        session = _ServerSession(
            phase="query_sent",
            rng=self.rng.spawn(frame.query_id),
            backend=self.backend,
            ledger_before=self.ledger.snapshot(),
        )
        session.pack, session.records, challenges = self.eval_round1(
            compressed, session.rng
        )
        session.phase = "bcc_pending"
        self.sessions[frame.query_id] = session
        payload = _pack_sections(
            [self.backend.serialize_ciphertext(ct) for ct in challenges]
        )
        return encode_frame(MSG_BCC_CHALLENGE, frame.query_id, payload)

    def _handle_bcc_response(self, frame: Frame) -> bytes:
        session = self.sessions.get(frame.query_id)
        if session is None or session.phase != "bcc_pending":
            raise ProtocolError(f"no conversion pending for {frame.query_id.hex()}")
        sections = _unpack_sections(frame.payload)
        if len(sections) != len(session.pack.buckets):
            raise ProtocolError("conversion ciphertext count mismatch")
        converted = [self.backend.deserialize_ciphertext(s) for s in sections]
        result_ct = self.eval_finalize(session.pack, session.records, converted)
        session.phase = "done"
        del self.sessions[frame.query_id]
        meta = json.dumps({"ops": self.ledger.delta(session.ledger_before)}).encode()
        return encode_frame(
            MSG_RESULT, frame.query_id,
            _pack_sections([self.backend.serialize_ciphertext(result_ct), meta]),
        )

    def eval_finalize(
        self, pack: SumPathPack, records: list, converted: list[CipherHandle]
    ) -> CipherHandle:
        """Leaf-score multiply, rotate-and-add aggregation, score packing."""
        positions = [record.position_of for record in records]
        multi = self.forest.model_kind == "xgboost" and self.forest.num_classes > 2
        class_ids = list(range(self.forest.num_classes)) if multi else [None]

        n = self.params.slot_count
        result: CipherHandle | None = None
        for out_slot, class_id in enumerate(class_ids):
            plains = leaf_plaintext(
                self.backend, self.forest, self.table, pack, positions, class_id
            )
            masked: CipherHandle | None = None
            for ct, plain in zip(converted, plains):
                term = self.backend.mult(ct, plain)
                masked = term if masked is None else self.backend.add(masked, term)
            aggregated = self._rotate_sum(masked)
            if not multi:
                return aggregated
            unit = np.zeros(n, dtype=np.int64)
            unit[0] = 1
            picked = self.backend.mult(aggregated, PlainVector(self.params, unit))
            placed = self.backend.rotate_rows_right(picked, out_slot)
            result = placed if result is None else self.backend.add(result, placed)
        return result

    def _rotate_sum(self, ct: CipherHandle) -> CipherHandle:
        """Slot 0 ends up holding the sum of the first-half slots."""
        span = 1
        while span < self.params.half:
            ct = self.backend.add(ct, self.backend.rotate_rows(ct, span))
            span *= 2
        return ct


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InferenceResult:
    """Raw fixed-point class scores and the derived prediction."""

    class_scores: tuple[int, ...]
    predicted_class: int
    query_id: bytes
    ops: dict | None = None


class Client:
    """Feature owner: packs queries, runs conversions, reads results."""

    def __init__(self, channel, seed=None):
        self.channel = channel
        self.rng = DeterministicRng(seed).spawn("client")
        self.params: FheParams | None = None
        self.layout: QueryLayout | None = None
        self.profiles: list[bcc.FrequencyProfile] = []
        self.num_classes = 0
        self.model_kind = ""
        self.backend: ReferenceBackend | None = None
        self.key: SecretKey | None = None
        self.transcript: list[tuple[str, str]] = []
        # client-visible challenge statistics: per ciphertext (zeros, nonzeros)
        self.last_challenge_counts: list[tuple[int, int]] = []

    # -- setup -----------------------------------------------------------------

    def setup(self) -> None:
        frame = self._exchange(MSG_SETUP_REQ, self.rng.randbytes(8), b"")
        if frame.msg_type != MSG_SETUP_RESP:
            raise ProtocolError(f"setup failed: {frame.type_name}")
        params_blob, layout_json, doc_json = _unpack_sections(frame.payload)
        self.params = FheParams.from_bytes(params_blob)
        self.layout = QueryLayout.from_json(layout_json.decode())
        doc = json.loads(doc_json.decode())
        self.num_classes = int(doc["num_classes"])
        self.model_kind = str(doc["model_kind"])
        self.profiles = [bcc.FrequencyProfile.from_dict(p) for p in doc["profiles"]]
        self.backend = ReferenceBackend(self.params)
        self.key = self.backend.keygen(self.rng.spawn("keys"))

    # -- inference ---------------------------------------------------------------

    def infer(self, features: dict[str, float]) -> InferenceResult:
        if self.backend is None:
            self.setup()
        query_id = self.rng.randbytes(8)
        self.transcript = []

        missing = [s.name for s in self.layout.features if s.name not in features]
        if missing:
            raise ProtocolError(f"query is missing features {missing}")
        quantized = {
            spec.name: self.layout.quantize_value(spec.name, features[spec.name])
            for spec in self.layout.features
        }
        planes = pack_query_planes(quantized, self.layout)
        compressed = compress_query(self.backend, planes, self.layout, self.key)
        sections = [self.key.eval_key().to_bytes()] + [
            self.backend.serialize_ciphertext(ct) for ct in compressed.ciphertexts
        ]
        challenge = self._exchange(MSG_QUERY, query_id, _pack_sections(sections))
        if challenge.msg_type != MSG_BCC_CHALLENGE:
            raise ProtocolError(self._describe_failure(challenge))

        converted = []
        self.last_challenge_counts = []
        for blob in _unpack_sections(challenge.payload):
            c_s = self.backend.deserialize_ciphertext(blob)
            slots = np.asarray(self.backend.decrypt(c_s, self.key).slots)
            self.last_challenge_counts.append(
                (int((slots == 0).sum()), int((slots != 0).sum()))
            )
            c_c = bcc.client_convert(self.backend, c_s, self.key)
            converted.append(self.backend.serialize_ciphertext(c_c))
        result = self._exchange(MSG_BCC_RESPONSE, query_id, _pack_sections(converted))
        if result.msg_type != MSG_RESULT:
            raise ProtocolError(self._describe_failure(result))

        ct_blob, meta_blob = _unpack_sections(result.payload)
        scores_plain = self.backend.decrypt(
            self.backend.deserialize_ciphertext(ct_blob), self.key
        )
        ops = json.loads(meta_blob.decode()).get("ops")
        return self._read_result(scores_plain, query_id, ops)

    def _read_result(self, plain, query_id: bytes, ops) -> InferenceResult:
        t = self.params.plain_modulus
        multi = self.model_kind == "xgboost" and self.num_classes > 2
        width = self.num_classes if multi else 1
        scores = []
        for slot in range(width):
            value = int(plain.slots[slot])
            scores.append(value - t if value > t // 2 else value)
        return InferenceResult(
            tuple(scores), predict_from_scores(scores), query_id, ops
        )

    # -- plumbing ---------------------------------------------------------------

    def _exchange(self, msg_type: int, query_id: bytes, payload: bytes) -> Frame:
        self.transcript.append(("send", _TYPE_NAMES[msg_type]))
        response = decode_frame(self.channel.request(encode_frame(msg_type, query_id, payload)))
        self.transcript.append(("recv", response.type_name))
        return response

    @staticmethod
    def _describe_failure(frame: Frame) -> str:
        if frame.msg_type == MSG_ERROR:
            doc = json.loads(frame.payload.decode() or "{}")
            return f"server error {doc.get('code')}: {doc.get('message')}"
        return f"unexpected {frame.type_name}"


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


class LoopbackChannel:
    """In-process request/response channel for tests."""

    def __init__(self, engine: ServerEngine):
        self.engine = engine

    def request(self, frame: bytes) -> bytes:
        return self.engine.handle_frame(frame)


class TcpChannel:
    """Blocking client channel over a TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        import socket

        self.sock = socket.create_connection((host, port), timeout=timeout)

    def request(self, frame: bytes) -> bytes:
        self.sock.sendall(frame)
        return _read_frame(self.sock)

    def close(self) -> None:
        self.sock.close()


def _read_frame(sock) -> bytes:
    header = _read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    return header + _read_exact(sock, length)


def _read_exact(sock, count: int) -> bytes:
    chunks = []
    while count:
        chunk = sock.recv(count)
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        count -= len(chunk)
    return b"".join(chunks)


class TcpServer:
    """One session thread per connection around a ServerEngine."""

    def __init__(self, engine: ServerEngine, host: str = "127.0.0.1", port: int = 0):
        import socket
        import threading

        self.engine = engine
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._threads: list[threading.Thread] = []

    def start(self) -> "TcpServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        import threading

        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            worker = threading.Thread(target=self._session, args=(conn,), daemon=True)
            worker.start()
            self._threads.append(worker)

    def _session(self, conn) -> None:
        try:
            while True:
                frame = _read_frame(conn)
                conn.sendall(self.engine.handle_frame(frame))
        except (ProtocolError, OSError):
            pass
        finally:
            conn.close()

    def stop(self) -> None:
        self._stop.set()
        self._sock.close()
        for worker in self._threads:
            worker.join(timeout=1.0)
