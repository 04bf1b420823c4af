"""Vehicle-key authentication: messages and the three state machines.

Round flow (fob <-> vehicle RF terminal, with the vehicle system verifying
certificates)::

    fob      ADV            Enc(k, PIDfob)
    vehicle  AUTH_REQUEST   Enc(k, rand1) | cert_request
    fob      AUTH_RESPONSE  fob.crt | rand1'
    vehicle  VERIFY_OK      Enc(k, rand2)        or VERIFY_FAILED(reason)
    fob      CONTROL_DATA   Enc(k, rand2' | command)
    vehicle  CONTROL_OK     Enc(rand2, rand2)    (both sides then switch k <- rand2)

Wire form of every message is a 1-byte kind tag followed by a fixed-width
payload.  Handlers never raise on adversarial input: a message that does
not fit the current phase is ignored and the phase is left unchanged.
"""

from __future__ import annotations

import enum
import hmac
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import authcore
from .authcore import (
    CERT_LEN,
    CREDENTIAL_LEN,
    Certificate,
    CertificateAuthority,
    CredentialSet,
    RevocationList,
    sym_decrypt,
    sym_encrypt,
)
from .errors import DecodeError, DecryptError, InvalidStateError

REASON_RAND1 = "error rand1"
REASON_CRT = "crt error"
REASON_WIDTH = 16
DEFAULT_VIN = "LSVAU2180N2183294"


class MessageKind(enum.IntEnum):
    ADV = 1
    AUTH_REQUEST = 2
    AUTH_RESPONSE = 3
    VERIFY_OK = 4
    VERIFY_FAILED = 5
    CONTROL_DATA = 6
    CONTROL_OK = 7
    CRED_UPDATE = 8


_CRED_UPDATE_LEN = (CREDENTIAL_LEN // 16 + 1) * 16

PAYLOAD_LEN: Dict[MessageKind, int] = {
    MessageKind.ADV: 16,
    MessageKind.AUTH_REQUEST: 17,
    MessageKind.AUTH_RESPONSE: CERT_LEN + 16,
    MessageKind.VERIFY_OK: 16,
    MessageKind.VERIFY_FAILED: REASON_WIDTH,
    MessageKind.CONTROL_DATA: 32,
    MessageKind.CONTROL_OK: 16,
    MessageKind.CRED_UPDATE: _CRED_UPDATE_LEN,
}


class Command(enum.Enum):
    LOCK = "LOCK"
    UNLOCK = "UNLOCK"
    TRUNK = "TRUNK"

    def encode(self) -> bytes:
        return self.value.encode("ascii").ljust(16, b"\x00")

    @classmethod
    def decode(cls, raw: bytes) -> Optional["Command"]:
        try:
            name = raw.rstrip(b"\x00").decode("ascii")
            return cls(name) if cls(name).encode() == raw else None
        except (UnicodeDecodeError, ValueError):
            return None


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    payload: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "kind", MessageKind(self.kind))
        if len(self.payload) != PAYLOAD_LEN[self.kind]:
            raise DecodeError(
                f"{self.kind.name} payload must be {PAYLOAD_LEN[self.kind]} bytes, "
                f"got {len(self.payload)}"
            )

    def to_bytes(self) -> bytes:
        return bytes([self.kind]) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Message":
        if not data:
            raise DecodeError("empty message")
        try:
            kind = MessageKind(data[0])
        except ValueError:
            raise DecodeError(f"unknown message kind {data[0]}") from None
        return cls(kind, bytes(data[1:]))

    # constructors
    @classmethod
    def adv(cls, ciphertext: bytes) -> "Message":
        return cls(MessageKind.ADV, ciphertext)

    @classmethod
    def auth_request(cls, auth_data1: bytes, cert_request: bool = True) -> "Message":
        return cls(MessageKind.AUTH_REQUEST, auth_data1 + bytes([int(cert_request)]))

    @classmethod
    def auth_response(cls, cert: bytes, rand1: bytes) -> "Message":
        return cls(MessageKind.AUTH_RESPONSE, cert + rand1)

    @classmethod
    def verify_ok(cls, auth_data2: bytes) -> "Message":
        return cls(MessageKind.VERIFY_OK, auth_data2)

    @classmethod
    def verify_failed(cls, reason: str) -> "Message":
        if reason not in (REASON_RAND1, REASON_CRT):
            raise ValueError(f"unknown failure reason {reason!r}")
        return cls(MessageKind.VERIFY_FAILED, reason.encode("ascii").ljust(REASON_WIDTH, b"\x00"))

    @classmethod
    def control_data(cls, ciphertext: bytes) -> "Message":
        return cls(MessageKind.CONTROL_DATA, ciphertext)

    @classmethod
    def control_ok(cls, ack: bytes) -> "Message":
        return cls(MessageKind.CONTROL_OK, ack)

    # field accessors
    @property
    def auth_data(self) -> bytes:
        return self.payload[:16]

    @property
    def cert_request(self) -> bool:
        return bool(self.payload[16])

    @property
    def cert_bytes(self) -> bytes:
        return self.payload[:CERT_LEN]

    @property
    def rand1(self) -> bytes:
        return self.payload[CERT_LEN:]

    @property
    def reason(self) -> str:
        return self.payload.rstrip(b"\x00").decode("ascii", errors="replace")


def control_ack(rand2: bytes) -> bytes:
    """CONTROL_OK payload: ``rand2`` encrypted under itself, the next session key."""
    return sym_encrypt(rand2, rand2)


# -- trace -------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEntry:
    round: int
    sender: str
    message: Message

    def line(self) -> str:
        return f"{self.round} {self.sender} {self.message.kind.name} {self.message.payload.hex()}"


@dataclass
class Trace:
    entries: List[TraceEntry] = field(default_factory=list)

    def add(self, round_no: int, sender: str, msg: Optional[Message]) -> Optional[Message]:
        if msg is not None:
            self.entries.append(TraceEntry(round_no, sender, msg))
        return msg

    def lines(self) -> List[str]:
        return [e.line() for e in self.entries]

    def kinds(self) -> List[MessageKind]:
        return [e.message.kind for e in self.entries]


# -- key fob -----------------------------------------------------------------

class FobPhase(enum.Enum):
    IDLE = "IDLE"
    ADVERTISING = "ADVERTISING"
    AWAIT_CHALLENGE = "AWAIT_CHALLENGE"
    AWAIT_VERDICT = "AWAIT_VERDICT"
    AWAIT_CONTROL_ACK = "AWAIT_CONTROL_ACK"
    DONE = "DONE"
    SLEEP = "SLEEP"


@dataclass
class KeyFob:
    creds: CredentialSet
    control_cmd: Command = Command.UNLOCK
    phase: FobPhase = FobPhase.IDLE
    pending_rand2: Optional[bytes] = None
    last_reason: Optional[str] = None

    @property
    def session_key(self) -> bytes:
        return self.creds.session_key

    def new_round(self) -> None:
        self.phase = FobPhase.IDLE
        self.pending_rand2 = None
        self.last_reason = None

    def make_adv(self) -> Message:
        if self.phase is not FobPhase.IDLE:
            raise InvalidStateError(f"cannot advertise from {self.phase.name}")
        self.phase = FobPhase.ADVERTISING
        return Message.adv(sym_encrypt(self.session_key, self.creds.pid))

    def on_connected(self) -> None:
        if self.phase is FobPhase.ADVERTISING:
            self.phase = FobPhase.AWAIT_CHALLENGE

    def on_challenge(self, msg: Message) -> Optional[Message]:
        if msg.kind is not MessageKind.AUTH_REQUEST or self.phase not in (
            FobPhase.ADVERTISING, FobPhase.AWAIT_CHALLENGE
        ):
            return None
        # unpadded block: a stale key decrypts to garbage rather than failing
        rand1 = sym_decrypt(self.session_key, msg.auth_data, padded=False)
        self.phase = FobPhase.AWAIT_VERDICT
        return Message.auth_response(self.creds.cert.to_bytes(), rand1)

    def on_verdict(self, msg: Message) -> Optional[Message]:
        if self.phase is not FobPhase.AWAIT_VERDICT:
            return None
        if msg.kind is MessageKind.VERIFY_FAILED:
            self.last_reason = msg.reason
            self.phase = FobPhase.SLEEP
            return None
        if msg.kind is not MessageKind.VERIFY_OK:
            return None
        rand2 = sym_decrypt(self.session_key, msg.auth_data, padded=False)
        self.pending_rand2 = rand2
        self.phase = FobPhase.AWAIT_CONTROL_ACK
        return Message.control_data(sym_encrypt(self.session_key, rand2 + self.control_cmd.encode()))

    def on_control_ok(self, msg: Message) -> None:
        if msg.kind is not MessageKind.CONTROL_OK or self.phase is not FobPhase.AWAIT_CONTROL_ACK:
            return
        # an empty ack could be forged or replayed to push the fob onto a key
        # the vehicle never adopted; only the holder of rand2 can produce this one
        if not hmac.compare_digest(msg.payload, control_ack(self.pending_rand2)):
            return
        self.creds = self.creds.with_session_key(
            authcore.rotate_session_key(self.session_key, self.pending_rand2)
        )
        self.pending_rand2 = None
        self.phase = FobPhase.DONE

    def on_cred_update(self, msg: Message) -> bool:
        """Install credentials pushed by the vehicle system; ``True`` on success."""
        if msg.kind is not MessageKind.CRED_UPDATE or self.phase is not FobPhase.DONE:
            return False
        try:
            blob = sym_decrypt(self.session_key, msg.payload)
            self.creds = CredentialSet.from_bytes(blob)
        except (DecryptError, DecodeError):
            return False
        return True

    def handle(self, msg: Message) -> Optional[Message]:
        """Dispatch any inbound message; unexpected ones are ignored."""
        if msg.kind is MessageKind.AUTH_REQUEST:
            return self.on_challenge(msg)
        if msg.kind in (MessageKind.VERIFY_OK, MessageKind.VERIFY_FAILED):
            return self.on_verdict(msg)
        if msg.kind is MessageKind.CONTROL_OK:
            self.on_control_ok(msg)
        elif msg.kind is MessageKind.CRED_UPDATE:
            self.on_cred_update(msg)
        return None


# -- vehicle side ------------------------------------------------------------

class VehiclePhase(enum.Enum):
    SCANNING = "SCANNING"
    CHALLENGE_SENT = "CHALLENGE_SENT"
    AWAIT_CERT_VERDICT = "AWAIT_CERT_VERDICT"
    AUTHED = "AUTHED"
    DONE = "DONE"
    REJECTED = "REJECTED"


@dataclass
class Defenses:
    """Switches used by the attack harness to show each defense is load-bearing."""

    whitelist: bool = True
    revocation: bool = True
    key_update: bool = True
    round_freshness: bool = True


@dataclass
class VehicleSystem:
    """Intermediate CA plus certificate verification and revocation."""

    root_cert: Certificate
    intermediate: CertificateAuthority
    crl: RevocationList
    vin: str = DEFAULT_VIN

    def verify_fob_cert(self, cert_bytes: bytes, now: int, revocation: bool = True
                        ) -> Tuple[bool, Optional[Certificate]]:
        try:
            cert = Certificate.from_bytes(cert_bytes)
            ok = authcore.verify_chain(
                cert, [self.intermediate.cert, self.root_cert], self.crl if revocation else None, now
            )
        except DecodeError:
            return False, None
        return ok, cert


@dataclass
class VehicleTerminal:
    whitelist: List[bytes]
    session_key: bytes
    prev_session_key: Optional[bytes] = None
    phase: VehiclePhase = VehiclePhase.SCANNING
    rand1: Optional[bytes] = None
    rand2: Optional[bytes] = None
    connected: bool = False
    matched_pid: Optional[bytes] = None
    active_key: Optional[bytes] = None
    authed_cert: Optional[Certificate] = None
    last_rand2: Optional[bytes] = None
    defenses: Defenses = field(default_factory=Defenses)
    executed: List[Command] = field(default_factory=list)

    def __post_init__(self):
        if not self.whitelist:
            raise ValueError("whitelist must not be empty")

    def new_round(self) -> None:
        self.phase = VehiclePhase.SCANNING
        self.rand1 = None
        self.rand2 = None
        self.connected = False
        self.matched_pid = None
        self.active_key = None

    def _match(self, adv: bytes, key: bytes) -> Optional[bytes]:
        for pid in self.whitelist:
            if sym_encrypt(key, pid) == adv:
                return pid
        return None

    def on_adv(self, msg: Message) -> bool:
        """Connect iff the advertisement is a whitelisted PID under a known key.

        The previous session key is tried once so that a fob which missed
        CONTROL_OK (and so never rotated) can still get back in.
        """
        if msg.kind is not MessageKind.ADV or self.phase is not VehiclePhase.SCANNING or self.connected:
            return False
        pid = self._match(msg.payload, self.session_key)
        key = self.session_key
        if pid is not None:
            # fob holds the current key, so the fallback is no longer needed
            self.prev_session_key = None
        elif self.prev_session_key is not None:
            pid = self._match(msg.payload, self.prev_session_key)
            key = self.prev_session_key
        if pid is None:
            if self.defenses.whitelist:
                return False
            key = self.session_key
        self.connected = True
        self.matched_pid = pid
        self.active_key = key
        return True

    def make_challenge(self, rng: random.Random) -> Message:
        if not self.connected or self.phase is not VehiclePhase.SCANNING:
            raise InvalidStateError("no connected fob to challenge")
        self.rand1 = rng.randbytes(16)
        self.phase = VehiclePhase.CHALLENGE_SENT
        return Message.auth_request(sym_encrypt(self.active_key, self.rand1), cert_request=True)

    def on_auth_response(self, system: VehicleSystem, msg: Message, now: int,
                         rng: random.Random) -> Optional[Message]:
        if msg.kind is not MessageKind.AUTH_RESPONSE or self.phase is not VehiclePhase.CHALLENGE_SENT:
            return None
        if msg.rand1 != self.rand1:
            self.phase = VehiclePhase.REJECTED
            self.rand1 = None
            return Message.verify_failed(REASON_RAND1)
        self.phase = VehiclePhase.AWAIT_CERT_VERDICT
        ok, cert = system.verify_fob_cert(msg.cert_bytes, now, self.defenses.revocation)
        if ok:
            if self.matched_pid is not None:
                ok = cert.subject_id == self.matched_pid
            else:
                ok = cert.subject_id in self.whitelist
        self.rand1 = None
        if not ok:
            self.phase = VehiclePhase.REJECTED
            return Message.verify_failed(REASON_CRT)
        if self.defenses.round_freshness or self.last_rand2 is None:
            self.rand2 = rng.randbytes(16)
        else:
            self.rand2 = self.last_rand2
        self.last_rand2 = self.rand2
        self.authed_cert = cert
        self.phase = VehiclePhase.AUTHED
        return Message.verify_ok(sym_encrypt(self.active_key, self.rand2))

    def on_control(self, msg: Message) -> Tuple[bool, Optional[Message]]:
        if msg.kind is not MessageKind.CONTROL_DATA or self.phase is not VehiclePhase.AUTHED:
            return False, None
        plain = sym_decrypt(self.active_key, msg.payload, padded=False)
        command = Command.decode(plain[16:])
        if plain[:16] != self.rand2 or command is None:
            self.phase = VehiclePhase.REJECTED
            self.connected = False
            return False, None
        self.executed.append(command)
        if self.defenses.round_freshness:
            self.prev_session_key = self.active_key
            self.session_key = authcore.rotate_session_key(self.active_key, self.rand2)
        self.phase = VehiclePhase.DONE
        return True, Message.control_ok(control_ack(self.rand2))

    def handle(self, msg: Message, system: VehicleSystem, now: int, rng: random.Random
               ) -> Tuple[bool, Optional[Message]]:
        """Dispatch any inbound message; returns ``(executed, reply)``."""
        if msg.kind is MessageKind.ADV:
            if self.on_adv(msg):
                return False, self.make_challenge(rng)
            return False, None
        if msg.kind is MessageKind.AUTH_RESPONSE:
            return False, self.on_auth_response(system, msg, now, rng)
        if msg.kind is MessageKind.CONTROL_DATA:
            return self.on_control(msg)
        return False, None


def system_issue_update(system: VehicleSystem, vehicle: VehicleTerminal, rng: random.Random,
                        now: int = authcore.DEFAULT_EPOCH) -> Tuple[CredentialSet, Message]:
    """Revoke the current fob certificate and push fresh credentials.

    Needs a completed session: the update travels encrypted under the
    session key both sides agreed on at the end of that round.
    """
    if vehicle.phase is not VehiclePhase.DONE or vehicle.authed_cert is None:
        raise InvalidStateError("credential update needs a completed authenticated session")
    transport_key = vehicle.session_key
    if vehicle.defenses.revocation:
        system.crl.revoke(vehicle.authed_cert.serial)
    creds, _rand_ca = authcore.issue_fob_credentials(system.intermediate, system.vin, rng, now)
    if not vehicle.defenses.key_update:
        creds = creds.with_session_key(transport_key)
    msg = Message(MessageKind.CRED_UPDATE, sym_encrypt(transport_key, creds.to_bytes()))
    vehicle.whitelist = [creds.pid]
    vehicle.session_key = creds.session_key
    vehicle.prev_session_key = None
    vehicle.last_rand2 = None
    return creds, msg


# -- setup and a full round ---------------------------------------------------

@dataclass
class Deployment:
    system: VehicleSystem
    vehicle: VehicleTerminal
    fob: KeyFob
    root: CertificateAuthority


def provision(rng: random.Random, vin: str = DEFAULT_VIN, now: int = authcore.DEFAULT_EPOCH,
              defenses: Optional[Defenses] = None) -> Deployment:
    """System initialisation: CA hierarchy, fob credentials, whitelist."""
    root = authcore.gen_root_ca(rng, now)
    inter = authcore.gen_intermediate_ca(root, rng, now)
    system = VehicleSystem(root.cert, inter, RevocationList(inter.subject_id), vin)
    creds, _rand_ca = authcore.issue_fob_credentials(inter, vin, rng, now)
    vehicle = VehicleTerminal([creds.pid], creds.session_key, defenses=defenses or Defenses())
    return Deployment(system, vehicle, KeyFob(creds), root)


@dataclass
class RoundResult:
    executed: bool
    connected: bool
    reason: Optional[str]
    trace: Trace


def run_round(dep: Deployment, rng: random.Random, now: int = authcore.DEFAULT_EPOCH,
              round_no: int = 0, command: Command = Command.UNLOCK,
              drop_control_ok: bool = False, trace: Optional[Trace] = None) -> RoundResult:
    """Drive one legitimate round from advertisement to CONTROL_OK."""
    fob, vehicle, system = dep.fob, dep.vehicle, dep.system
    trace = trace if trace is not None else Trace()
    fob.new_round()
    vehicle.new_round()
    fob.control_cmd = command

    adv = trace.add(round_no, "fob", fob.make_adv())
    if not vehicle.on_adv(adv):
        return RoundResult(False, False, None, trace)
    fob.on_connected()
    req = trace.add(round_no, "vehicle", vehicle.make_challenge(rng))
    resp = trace.add(round_no, "fob", fob.on_challenge(req))
    verdict = trace.add(round_no, "vehicle", vehicle.on_auth_response(system, resp, now, rng))
    ctrl = trace.add(round_no, "fob", fob.on_verdict(verdict))
    if ctrl is None:
        return RoundResult(False, True, verdict.reason, trace)
    executed, ack = vehicle.on_control(ctrl)
    trace.add(round_no, "vehicle", ack)
    if ack is not None and not drop_control_ok:
        fob.on_control_ok(ack)
    return RoundResult(executed, True, None, trace)
