"""Scripted adversaries against the authentication state machines.

Each attack targets one defense.  Its verdict is ``"rejected"`` when no
command ran and the attack was stopped exactly where that defense sits;
otherwise ``"succeeded"``.  Running an attack with its defense switched off
must give ``"succeeded"``.  That shows the defense, not some other step,
is what stopped the attack.
"""

from __future__ import annotations

import copy
import enum
import random
from dataclasses import dataclass, field
from typing import List, Optional

from . import authcore
from .protocol import (
    REASON_CRT,
    REASON_RAND1,
    Defenses,
    Deployment,
    KeyFob,
    Message,
    MessageKind,
    Trace,
    provision,
    run_round,
    system_issue_update,
)

REJECTED = "rejected"
SUCCEEDED = "succeeded"

FP_IGNORED = "ignored at ADV"
FP_CONTROL = "control rejected"


class AttackKind(str, enum.Enum):
    IMPERSONATE_INJECT = "IMPERSONATE_INJECT"
    IMPERSONATE_REVOKED = "IMPERSONATE_REVOKED"
    IMPERSONATE_STALE_KEY = "IMPERSONATE_STALE_KEY"
    REPLAY_CONTROL = "REPLAY_CONTROL"


DEFENSE_FOR = {
    AttackKind.IMPERSONATE_INJECT: "whitelist",
    AttackKind.IMPERSONATE_REVOKED: "revocation",
    AttackKind.IMPERSONATE_STALE_KEY: "key_update",
    AttackKind.REPLAY_CONTROL: "round_freshness",
}

EXPECTED_FAILURE_POINT = {
    AttackKind.IMPERSONATE_INJECT: FP_IGNORED,
    AttackKind.IMPERSONATE_REVOKED: REASON_CRT,
    AttackKind.IMPERSONATE_STALE_KEY: REASON_RAND1,
    AttackKind.REPLAY_CONTROL: FP_CONTROL,
}


@dataclass(frozen=True)
class AttackDescriptor:
    kind: AttackKind
    trigger_event: int = 0
    defense_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.trigger_event < 0:
            raise ValueError("trigger_event must be >= 0")

    @property
    def expected_verdict(self) -> str:
        return REJECTED if self.defense_enabled else SUCCEEDED


@dataclass
class AttackOutcome:
    descriptor: AttackDescriptor
    verdict: str
    failure_point: Optional[str]
    executed: bool
    transcript: List[str] = field(default_factory=list)

    @property
    def as_expected(self) -> bool:
        return self.verdict == self.descriptor.expected_verdict

    def summary(self) -> dict:
        return {
            "kind": self.descriptor.kind.value,
            "trigger_event": self.descriptor.trigger_event,
            "defense_enabled": self.descriptor.defense_enabled,
            "verdict": self.verdict,
            "expected": self.descriptor.expected_verdict,
            "failure_point": self.failure_point,
            "executed": self.executed,
        }


def _attacker_round(vehicle_dep: Deployment, adv: Message, attacker: KeyFob, rng: random.Random,
                    now: int, trace: Trace, round_no: int):
    """Feed an attacker-chosen ADV and let ``attacker`` answer the rest.

    Returns ``(executed, failure_point)``.
    """
    vehicle, system = vehicle_dep.vehicle, vehicle_dep.system
    vehicle.new_round()
    trace.add(round_no, "attacker", adv)
    if not vehicle.on_adv(adv):
        return False, FP_IGNORED
    attacker.new_round()
    attacker.phase = attacker.phase.AWAIT_CHALLENGE
    req = trace.add(round_no, "vehicle", vehicle.make_challenge(rng))
    resp = trace.add(round_no, "attacker", attacker.on_challenge(req))
    verdict = trace.add(round_no, "vehicle", vehicle.on_auth_response(system, resp, now, rng))
    if verdict.kind is MessageKind.VERIFY_FAILED:
        return False, verdict.reason
    ctrl = trace.add(round_no, "attacker", attacker.on_verdict(verdict))
    executed, ack = vehicle.on_control(ctrl)
    trace.add(round_no, "vehicle", ack)
    return executed, (None if executed else FP_CONTROL)


def _inject(dep: Deployment, rng: random.Random, now: int, trace: Trace):
    # broadcast captured from a fob that was never paired with this vehicle
    outsider = provision(random.Random(rng.getrandbits(64)), vin=dep.system.vin, now=now)
    adv = outsider.fob.make_adv()
    return _attacker_round(dep, adv, outsider.fob, rng, now, trace, 1)


def _revoked(dep: Deployment, rng: random.Random, now: int, trace: Trace):
    # the owner's fob is stolen; the owner reports it and its certificate is revoked
    stolen = copy.deepcopy(dep.fob)
    if dep.vehicle.defenses.revocation:
        dep.system.crl.revoke(stolen.creds.cert.serial)
    stolen.new_round()
    adv = stolen.make_adv()
    return _attacker_round(dep, adv, stolen, rng, now, trace, 1)


def _stale_key(dep: Deployment, rng: random.Random, now: int, trace: Trace):
    stolen = copy.deepcopy(dep.fob)
    if dep.vehicle.phase.name != "DONE":
        res = run_round(dep, rng, now, round_no=1, trace=trace)
        if not res.executed:
            raise RuntimeError("legitimate round failed while staging the attack")
        stolen = copy.deepcopy(dep.fob)
    _creds, update = system_issue_update(dep.system, dep.vehicle, rng, now)
    trace.add(1, "vehicle", update)
    if not dep.fob.on_cred_update(update):
        raise RuntimeError("legitimate fob rejected its credential update")
    # the new certificate is public; the attacker presents it and replays the new broadcast
    dep.fob.new_round()
    captured_adv = dep.fob.make_adv()
    dep.fob.new_round()
    attacker = _CertSwappedFob(stolen.creds, dep.fob.creds.cert.to_bytes())
    return _attacker_round(dep, captured_adv, attacker, rng, now, trace, 2)


class _CertSwappedFob(KeyFob):
    """Fob clone that presents a different (public) certificate."""

    def __init__(self, creds, cert_bytes: bytes):
        super().__init__(creds)
        self._cert_bytes = cert_bytes

    def on_challenge(self, msg):
        resp = super().on_challenge(msg)
        if resp is None:
            return None
        return Message.auth_response(self._cert_bytes, resp.rand1)


def _replay(dep: Deployment, rng: random.Random, now: int, trace: Trace):
    first = run_round(dep, rng, now, round_no=1)
    trace.entries.extend(first.trace.entries)
    recorded = [e.message for e in first.trace.entries if e.message.kind is MessageKind.CONTROL_DATA]
    if not first.executed or not recorded:
        raise RuntimeError("legitimate round failed while staging the attack")
    fob, vehicle = dep.fob, dep.vehicle
    fob.new_round()
    vehicle.new_round()
    adv = trace.add(2, "fob", fob.make_adv())
    if not vehicle.on_adv(adv):
        raise RuntimeError("legitimate fob not recognised in the second round")
    fob.on_connected()
    req = trace.add(2, "vehicle", vehicle.make_challenge(rng))
    resp = trace.add(2, "fob", fob.on_challenge(req))
    trace.add(2, "vehicle", vehicle.on_auth_response(dep.system, resp, now, rng))
    # attacker gets its recorded packet in ahead of the fob's own
    replayed = trace.add(2, "attacker", recorded[-1])
    executed, ack = vehicle.on_control(replayed)
    trace.add(2, "vehicle", ack)
    return executed, (None if executed else FP_CONTROL)


_RUNNERS = {
    AttackKind.IMPERSONATE_INJECT: _inject,
    AttackKind.IMPERSONATE_REVOKED: _revoked,
    AttackKind.IMPERSONATE_STALE_KEY: _stale_key,
    AttackKind.REPLAY_CONTROL: _replay,
}


def run_attack(desc: AttackDescriptor, dep: Deployment, rng: random.Random,
               now: int = authcore.DEFAULT_EPOCH) -> AttackOutcome:
    """Run one attack against ``dep``, which is mutated in place."""
    setattr(dep.vehicle.defenses, DEFENSE_FOR[desc.kind], desc.defense_enabled)
    trace = Trace()
    executed, failure_point = _RUNNERS[desc.kind](dep, rng, now, trace)
    rejected = not executed and failure_point == EXPECTED_FAILURE_POINT[desc.kind]
    return AttackOutcome(desc, REJECTED if rejected else SUCCEEDED, failure_point, executed,
                         trace.lines())


def fresh_deployment(seed: int, vin: Optional[str] = None, now: int = authcore.DEFAULT_EPOCH
                     ) -> Deployment:
    """Provision a pair and complete one legitimate round, as in normal use."""
    rng = random.Random(seed)
    dep = provision(rng, **({"vin": vin} if vin else {}), now=now, defenses=Defenses())
    if not run_round(dep, rng, now).executed:
        raise RuntimeError("initial round failed")
    return dep


def run_attack_suite(seed: int, attacks: Optional[List[AttackDescriptor]] = None,
                     vin: Optional[str] = None) -> List[AttackOutcome]:
    """Each attack on its own freshly provisioned deployment."""
    if not attacks:
        attacks = [AttackDescriptor(k) for k in AttackKind]
    outcomes = []
    for i, desc in enumerate(attacks):
        dep = fresh_deployment(seed * 1000 + i, vin)
        rng = random.Random(f"attack:{seed}:{i}")
        outcomes.append(run_attack(desc, dep, rng))
    return outcomes
