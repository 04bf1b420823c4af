import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from rkeadapt import authcore
from rkeadapt.authcore import sym_decrypt, sym_encrypt
from rkeadapt.errors import DecodeError, InvalidStateError
from rkeadapt.protocol import (
    PAYLOAD_LEN,
    REASON_CRT,
    REASON_RAND1,
    Command,
    control_ack,
    FobPhase,
    Message,
    MessageKind,
    VehiclePhase,
    provision,
    run_round,
    system_issue_update,
)

NOW = authcore.DEFAULT_EPOCH


@pytest.fixture
def dep():
    return provision(random.Random(42))


def start(dep, rng):
    """Advertise, connect and challenge; returns the AUTH_REQUEST."""
    dep.fob.new_round()
    dep.vehicle.new_round()
    adv = dep.fob.make_adv()
    assert dep.vehicle.on_adv(adv)
    dep.fob.on_connected()
    return dep.vehicle.make_challenge(rng)


class TestMessages:
    def test_lengths(self):
        assert PAYLOAD_LEN[MessageKind.AUTH_RESPONSE] == 153 + 16
        assert PAYLOAD_LEN[MessageKind.CONTROL_DATA] == 32
        assert PAYLOAD_LEN[MessageKind.CRED_UPDATE] == 224

    def test_roundtrip(self):
        m = Message.verify_failed(REASON_CRT)
        back = Message.from_bytes(m.to_bytes())
        assert back == m and back.reason == "crt error"

    @pytest.mark.parametrize("raw", [b"", b"\x00", b"\x09" + bytes(16), b"\x01" + bytes(15)])
    def test_decode_errors(self, raw):
        with pytest.raises(DecodeError):
            Message.from_bytes(raw)

    def test_unknown_reason(self):
        with pytest.raises(ValueError):
            Message.verify_failed("nope")

    def test_command_codec(self):
        for c in Command:
            assert Command.decode(c.encode()) is c
        assert Command.decode(b"UNLOCK\x00\x00junk\x00\x00\x00\x00\x00\x00") is None
        assert Command.decode(b"\xff" * 16) is None


class TestAdvertising:
    def test_adv_matches_cipher(self, dep):
        adv = dep.fob.make_adv()
        assert adv.payload == sym_encrypt(dep.fob.session_key, dep.fob.creds.pid)

    def test_adv_is_stable_without_rotation(self, dep):
        a = dep.fob.make_adv()
        dep.fob.new_round()
        assert dep.fob.make_adv() == a

    def test_zero_pid_reduces_to_block_cipher(self):
        k = bytes(range(16))
        assert sym_encrypt(k, bytes(16)) == sym_decrypt(k, sym_encrypt(k, sym_encrypt(k, bytes(16))), padded=False)

    def test_double_advertise(self, dep):
        dep.fob.make_adv()
        with pytest.raises(InvalidStateError):
            dep.fob.make_adv()

    def test_paired_connects(self, dep):
        assert dep.vehicle.on_adv(dep.fob.make_adv())

    def test_stranger_ignored(self, dep):
        other = provision(random.Random(7))
        assert not dep.vehicle.on_adv(other.fob.make_adv())
        assert dep.vehicle.phase is VehiclePhase.SCANNING

    @given(st.binary(min_size=16, max_size=16))
    def test_random_bytes_ignored(self, payload):
        d = provision(random.Random(42))
        assert not d.vehicle.on_adv(Message.adv(payload)) or payload == d.fob.make_adv().payload


class TestChallenge:
    def test_deterministic(self):
        a = start(provision(random.Random(42)), random.Random(1))
        b = start(provision(random.Random(42)), random.Random(1))
        assert a == b

    def test_fresh_rand1(self, dep):
        rng = random.Random(1)
        a = start(dep, rng)
        b = start(dep, rng)
        assert a.auth_data != b.auth_data

    def test_decrypts_to_rand1(self, dep):
        req = start(dep, random.Random(1))
        assert sym_decrypt(dep.fob.session_key, req.auth_data, padded=False) == dep.vehicle.rand1
        assert req.cert_request

    def test_challenge_without_connection(self, dep):
        with pytest.raises(InvalidStateError):
            dep.vehicle.make_challenge(random.Random(1))

    def test_response_echoes_rand1_and_cert(self, dep):
        req = start(dep, random.Random(1))
        resp = dep.fob.on_challenge(req)
        assert resp.rand1 == dep.vehicle.rand1
        assert resp.cert_bytes == dep.fob.creds.cert.to_bytes()

    def test_stale_key_garbles_rand1(self, dep):
        req = start(dep, random.Random(1))
        dep.fob.creds = dep.fob.creds.with_session_key(b"\x00" * 16)
        resp = dep.fob.on_challenge(req)
        assert resp.rand1 != dep.vehicle.rand1


class TestVerdict:
    def test_happy_path(self, dep):
        rng = random.Random(1)
        resp = dep.fob.on_challenge(start(dep, rng))
        verdict = dep.vehicle.on_auth_response(dep.system, resp, NOW, rng)
        assert verdict.kind is MessageKind.VERIFY_OK
        assert sym_decrypt(dep.fob.session_key, verdict.auth_data, padded=False) == dep.vehicle.rand2

    def test_revoked(self, dep):
        rng = random.Random(1)
        dep.system.crl.revoke(dep.fob.creds.cert.serial)
        resp = dep.fob.on_challenge(start(dep, rng))
        verdict = dep.vehicle.on_auth_response(dep.system, resp, NOW, rng)
        assert verdict.kind is MessageKind.VERIFY_FAILED and verdict.reason == REASON_CRT

    def test_wrong_rand1(self, dep):
        rng = random.Random(1)
        resp = dep.fob.on_challenge(start(dep, rng))
        bad = Message.auth_response(resp.cert_bytes, bytes(16))
        verdict = dep.vehicle.on_auth_response(dep.system, bad, NOW, rng)
        assert verdict.reason == REASON_RAND1
        assert dep.vehicle.phase is VehiclePhase.REJECTED

    def test_cert_of_other_pid(self, dep):
        rng = random.Random(1)
        other = provision(random.Random(8))
        resp = dep.fob.on_challenge(start(dep, rng))
        swapped = Message.auth_response(other.fob.creds.cert.to_bytes(), resp.rand1)
        assert dep.vehicle.on_auth_response(dep.system, swapped, NOW, rng).reason == REASON_CRT

    def test_fob_sleeps_on_failure(self, dep):
        rng = random.Random(1)
        dep.fob.on_challenge(start(dep, rng))
        assert dep.fob.on_verdict(Message.verify_failed(REASON_CRT)) is None
        assert dep.fob.phase is FobPhase.SLEEP

    def test_control_data(self, dep):
        rng = random.Random(1)
        resp = dep.fob.on_challenge(start(dep, rng))
        ctrl = dep.fob.on_verdict(dep.vehicle.on_auth_response(dep.system, resp, NOW, rng))
        assert len(ctrl.payload) == 32
        plain = sym_decrypt(dep.fob.session_key, ctrl.payload, padded=False)
        assert plain == dep.vehicle.rand2 + Command.UNLOCK.encode()


class TestControl:
    def test_round_rotates_keys(self, dep):
        old = dep.vehicle.session_key
        res = run_round(dep, random.Random(1), command=Command.TRUNK)
        assert res.executed
        assert dep.vehicle.executed == [Command.TRUNK]
        assert dep.fob.session_key == dep.vehicle.session_key == dep.vehicle.last_rand2
        assert dep.fob.session_key != old
        assert dep.fob.phase is FobPhase.DONE and dep.vehicle.phase is VehiclePhase.DONE

    def test_trace_shape(self, dep):
        res = run_round(dep, random.Random(1))
        assert res.trace.kinds() == [
            MessageKind.ADV, MessageKind.AUTH_REQUEST, MessageKind.AUTH_RESPONSE,
            MessageKind.VERIFY_OK, MessageKind.CONTROL_DATA, MessageKind.CONTROL_OK,
        ]
        assert res.trace.lines()[0].startswith("0 fob ADV ")

    def test_replay_next_round(self, dep):
        rng = random.Random(1)
        first = run_round(dep, rng)
        old_ctrl = [e.message for e in first.trace.entries if e.message.kind is MessageKind.CONTROL_DATA][0]
        resp = dep.fob.on_challenge(start(dep, rng))
        dep.vehicle.on_auth_response(dep.system, resp, NOW, rng)
        executed, reply = dep.vehicle.on_control(old_ctrl)
        assert not executed and reply is None
        assert dep.vehicle.executed == [Command.UNLOCK]

    def test_bit_flip_in_rand2(self, dep):
        rng = random.Random(1)
        resp = dep.fob.on_challenge(start(dep, rng))
        dep.fob.on_verdict(dep.vehicle.on_auth_response(dep.system, resp, NOW, rng))
        r2 = bytearray(dep.vehicle.rand2)
        r2[0] ^= 1
        forged = Message.control_data(sym_encrypt(dep.vehicle.active_key, bytes(r2) + Command.UNLOCK.encode()))
        assert dep.vehicle.on_control(forged) == (False, None)
        assert dep.vehicle.phase is VehiclePhase.REJECTED

    def test_control_ok_only_from_await(self, dep):
        dep.fob.on_control_ok(Message.control_ok(bytes(16)))
        assert dep.fob.phase is FobPhase.IDLE

    def test_forged_ack_cannot_strand_fob(self, dep):
        # attacker swallows CONTROL_DATA and answers with an ack of its own
        rng = random.Random(1)
        resp = dep.fob.on_challenge(start(dep, rng))
        ctrl = dep.fob.on_verdict(dep.vehicle.on_auth_response(dep.system, resp, NOW, rng))
        assert ctrl is not None
        key = dep.fob.session_key
        dep.fob.on_control_ok(Message.control_ok(bytes(16)))
        dep.fob.on_control_ok(Message.control_ok(control_ack(bytes(16))))
        assert dep.fob.phase is FobPhase.AWAIT_CONTROL_ACK and dep.fob.session_key == key
        assert run_round(dep, rng, round_no=1).executed

    def test_previous_ack_ignored(self, dep):
        rng = random.Random(1)
        first = run_round(dep, rng)
        old_ack = first.trace.entries[-1].message
        assert old_ack.kind is MessageKind.CONTROL_OK
        resp = dep.fob.on_challenge(start(dep, rng))
        dep.fob.on_verdict(dep.vehicle.on_auth_response(dep.system, resp, NOW, rng))
        dep.fob.on_control_ok(old_ack)
        assert dep.fob.phase is FobPhase.AWAIT_CONTROL_ACK

    def test_lost_control_ok_recovers(self, dep):
        rng = random.Random(1)
        res = run_round(dep, rng, drop_control_ok=True)
        assert res.executed
        stale = dep.fob.session_key
        assert stale != dep.vehicle.session_key
        assert stale == dep.vehicle.prev_session_key
        res2 = run_round(dep, rng, round_no=1)
        assert res2.executed
        # matched through the fallback key, then both rotated to the new rand2
        assert dep.vehicle.active_key == stale
        assert dep.fob.session_key == dep.vehicle.session_key
        assert run_round(dep, rng, round_no=2).executed
        assert dep.vehicle.active_key == dep.vehicle.prev_session_key != stale

    def test_stale_key_usable_once(self, dep):
        rng = random.Random(1)
        run_round(dep, rng)
        before = copy.deepcopy(dep.fob)
        run_round(dep, rng)
        run_round(dep, rng)
        # two rotations later the old key is gone
        dep.fob = before
        assert not run_round(dep, rng).connected


class TestCredentialUpdate:
    def test_requires_completed_session(self, dep):
        with pytest.raises(InvalidStateError):
            system_issue_update(dep.system, dep.vehicle, random.Random(1))

    def test_update(self, dep):
        rng = random.Random(1)
        run_round(dep, rng)
        old_cert = dep.fob.creds.cert
        attacker = copy.deepcopy(dep.fob)
        creds, msg = system_issue_update(dep.system, dep.vehicle, rng)
        assert dep.fob.on_cred_update(msg)
        assert dep.fob.creds.pid == creds.pid
        chain = [dep.system.intermediate.cert, dep.system.root_cert]
        assert not authcore.verify_chain(old_cert, chain, dep.system.crl, NOW)
        assert authcore.verify_chain(creds.cert, chain, dep.system.crl, NOW)
        assert run_round(dep, rng).executed
        # the old key cannot read a challenge made under the new one
        dep.vehicle.new_round()
        dep.fob.new_round()
        dep.vehicle.on_adv(dep.fob.make_adv())
        req = dep.vehicle.make_challenge(rng)
        assert sym_decrypt(attacker.session_key, req.auth_data, padded=False) != dep.vehicle.rand1

    def test_update_rejected_when_not_done(self, dep):
        rng = random.Random(1)
        run_round(dep, rng)
        _, msg = system_issue_update(dep.system, dep.vehicle, rng)
        dep.fob.new_round()
        assert not dep.fob.on_cred_update(msg)

    def test_update_garbage(self, dep):
        run_round(dep, random.Random(1))
        assert not dep.fob.on_cred_update(Message(MessageKind.CRED_UPDATE, bytes(224)))


def test_thousand_rounds():
    rng = random.Random(2024)
    d = provision(rng)
    keys = set()
    for n in range(1000):
        assert run_round(d, rng, round_no=n).executed
        assert d.fob.session_key == d.vehicle.session_key
        keys.add(d.vehicle.session_key)
    assert len(keys) == 1000


def any_message():
    return st.sampled_from(list(MessageKind)).flatmap(
        lambda k: st.binary(min_size=PAYLOAD_LEN[k], max_size=PAYLOAD_LEN[k]).map(lambda p: Message(k, p))
    )


class Adversary(RuleBasedStateMachine):
    """Random adversarial messages interleaved with legitimate rounds."""

    def __init__(self):
        super().__init__()
        self.rng = random.Random(3)
        self.dep = provision(self.rng)
        self.legit = 0

    @rule()
    def legit_round(self):
        res = run_round(self.dep, self.rng)
        assert res.executed
        self.legit += 1

    @rule(msg=any_message())
    def inject_vehicle(self, msg):
        executed, _ = self.dep.vehicle.handle(msg, self.dep.system, NOW, self.rng)
        assert not executed

    @rule(msg=any_message())
    def inject_fob(self, msg):
        self.dep.fob.handle(msg)

    @invariant()
    def only_legit_commands(self):
        assert len(self.dep.vehicle.executed) == self.legit


Adversary.TestCase.settings = settings(max_examples=60, stateful_step_count=20, deadline=None)
TestAdversary = Adversary.TestCase
