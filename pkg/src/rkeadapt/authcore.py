"""Credential material and cryptographic primitives.

Two-tier CA hierarchy (vehicle server as root, vehicle system as
intermediate), compact fixed-width certificates signed with ECDSA P-256,
pseudo-ID derivation, AES-128 for the symmetric side, and revocation.

Certificate wire layout (153 bytes, integers big-endian)::

    serial(8) | subject_id(16) | subject_public_key(33) | issuer_id(16)
    | not_before(8) | not_after(8) | signature(64 = r || s)

The signature covers every byte before it.

AES is used in ECB mode because the vehicle recognises a fob by comparing
ciphertexts for equality, which needs deterministic encryption.  ECB leaks
equality of plaintext blocks; treat this as a property of the protocol, not
a general-purpose cipher.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Set, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, padding
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .errors import DecodeError, DecryptError

KEY_LEN = 16
BLOCK_LEN = 16
ID_LEN = 16
PUBKEY_LEN = 33
SIG_LEN = 64
SERIAL_LEN = 8
CERT_LEN = SERIAL_LEN + ID_LEN + PUBKEY_LEN + ID_LEN + 8 + 8 + SIG_LEN

# P-256 group order
CURVE_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_CURVE = ec.SECP256R1()
_SIG_ALG = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)

# 2023-11-14T22:13:20Z; fixed so certificate bytes are reproducible
DEFAULT_EPOCH = 1_700_000_000
DEFAULT_LIFETIME_S = 10 * 365 * 24 * 3600

ROOT_CA_NAME = "vehicle-server-root-ca"
INTERMEDIATE_CA_NAME = "vehicle-system-intermediate-ca"


def _check_len(name: str, value: bytes, n: int) -> bytes:
    value = bytes(value)
    if len(value) != n:
        raise ValueError(f"{name} must be {n} bytes, got {len(value)}")
    return value


def xor_bytes(*parts: bytes) -> bytes:
    out = bytearray(len(parts[0]))
    for p in parts:
        if len(p) != len(out):
            raise ValueError("xor operands differ in length")
        for i, b in enumerate(p):
            out[i] ^= b
    return bytes(out)


def name_digest(name: str) -> bytes:
    return hashlib.sha256(name.encode("utf-8")).digest()[:ID_LEN]


def vin_digest(vin: str) -> bytes:
    """Fold a VIN of up to 17 ASCII characters to 16 bytes."""
    if not isinstance(vin, str) or not 1 <= len(vin) <= 17:
        raise ValueError("vin must be 1-17 characters")
    try:
        raw = vin.encode("ascii")
    except UnicodeEncodeError:
        raise ValueError("vin must be ASCII") from None
    return hashlib.sha256(raw).digest()[:ID_LEN]


def derive_pseudo_id(id_fob: bytes, vin: str, rand_ca: bytes) -> bytes:
    """PIDfob = IDfob xor digest16(VIN) xor rand_ca."""
    id_fob = _check_len("id_fob", id_fob, ID_LEN)
    rand_ca = _check_len("rand_ca", rand_ca, ID_LEN)
    return xor_bytes(id_fob, vin_digest(vin), rand_ca)


# -- symmetric ---------------------------------------------------------------

def _ecb(key: bytes):
    return Cipher(algorithms.AES(_check_len("key", key, KEY_LEN)), modes.ECB())


def sym_encrypt(key: bytes, plaintext: bytes) -> bytes:
    """AES-128-ECB.  PKCS#7 padding is added only when the plaintext is not
    already a positive multiple of the block size."""
    plaintext = bytes(plaintext)
    if not plaintext or len(plaintext) % BLOCK_LEN:
        padder = padding.PKCS7(128).padder()
        plaintext = padder.update(plaintext) + padder.finalize()
    enc = _ecb(key).encryptor()
    return enc.update(plaintext) + enc.finalize()


def sym_decrypt(key: bytes, ciphertext: bytes, padded: bool = True) -> bytes:
    """Inverse of :func:`sym_encrypt`.

    ``padded`` must match how the plaintext was encrypted: pass ``False`` for
    block-aligned fixed-width fields.  A wrong key on a padded message shows
    up as :class:`DecryptError`; on an unpadded one it yields garbage.
    """
    ciphertext = bytes(ciphertext)
    if not ciphertext or len(ciphertext) % BLOCK_LEN:
        raise DecryptError(f"ciphertext length {len(ciphertext)} is not a multiple of 16")
    dec = _ecb(key).decryptor()
    plain = dec.update(ciphertext) + dec.finalize()
    if not padded:
        return plain
    unpadder = padding.PKCS7(128).unpadder()
    try:
        return unpadder.update(plain) + unpadder.finalize()
    except ValueError:
        raise DecryptError("bad padding") from None


def rotate_session_key(current: bytes, rand2: bytes) -> bytes:
    """The next round's session key is the verified ``rand2`` itself."""
    return _check_len("rand2", rand2, KEY_LEN)


# -- signatures --------------------------------------------------------------

@dataclass(frozen=True)
class SigningKeypair:
    secret: int
    public: bytes  # SEC1 compressed point

    @classmethod
    def from_secret(cls, secret: int) -> "SigningKeypair":
        if not 1 <= secret < CURVE_ORDER:
            raise ValueError("secret scalar out of range")
        sk = ec.derive_private_key(secret, _CURVE)
        pub = sk.public_key().public_bytes(Encoding.X962, PublicFormat.CompressedPoint)
        return cls(secret, pub)

    @classmethod
    def generate(cls, rng: random.Random) -> "SigningKeypair":
        return cls.from_secret(rng.randrange(1, CURVE_ORDER))

    @cached_property
    def _private_key(self) -> ec.EllipticCurvePrivateKey:
        return ec.derive_private_key(self.secret, _CURVE)

    def sign(self, message: bytes) -> bytes:
        return sign(self._private_key, message)

    def __deepcopy__(self, memo):
        # immutable; the cached key object cannot be copied
        return self


def sign(private_key: ec.EllipticCurvePrivateKey, message: bytes) -> bytes:
    """Deterministic (RFC 6979) ECDSA-SHA256 with low-s, as 64-byte r||s."""
    r, s = decode_dss_signature(private_key.sign(bytes(message), _SIG_ALG))
    if s > CURVE_ORDER // 2:
        s = CURVE_ORDER - s
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def load_public_key(public: bytes) -> ec.EllipticCurvePublicKey:
    if len(public) != PUBKEY_LEN:
        raise DecodeError(f"public key must be {PUBKEY_LEN} bytes")
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, bytes(public))
    except ValueError as exc:
        raise DecodeError(f"invalid curve point: {exc}") from None


def verify_signature(public: bytes, message: bytes, signature: bytes) -> bool:
    """``False`` for a bad signature; :class:`DecodeError` for an unusable key."""
    pk = load_public_key(public)
    if len(signature) != SIG_LEN:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    # high-s is refused so every signed message has exactly one encoding
    if not (0 < r < CURVE_ORDER and 0 < s <= CURVE_ORDER // 2):
        return False
    try:
        pk.verify(encode_dss_signature(r, s), bytes(message), ec.ECDSA(hashes.SHA256()))
    except InvalidSignature:
        return False
    return True


# -- certificates ------------------------------------------------------------

_TBS_FMT = ">Q16s33s16sQQ"


@dataclass(frozen=True)
class Certificate:
    serial: int
    subject_id: bytes
    subject_public_key: bytes
    issuer_id: bytes
    not_before: int
    not_after: int
    signature: bytes = b"\x00" * SIG_LEN

    def __post_init__(self):
        if not self.not_before < self.not_after:
            raise ValueError("not_before must precede not_after")

    def tbs_bytes(self) -> bytes:
        return struct.pack(
            _TBS_FMT,
            self.serial,
            self.subject_id,
            self.subject_public_key,
            self.issuer_id,
            self.not_before,
            self.not_after,
        )

    def to_bytes(self) -> bytes:
        return self.tbs_bytes() + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        data = bytes(data)
        if len(data) != CERT_LEN:
            raise DecodeError(f"certificate must be {CERT_LEN} bytes, got {len(data)}")
        fields = struct.unpack(_TBS_FMT, data[: CERT_LEN - SIG_LEN])
        try:
            return cls(*fields, signature=data[CERT_LEN - SIG_LEN:])
        except ValueError as exc:
            raise DecodeError(str(exc)) from None

    def signed_by(self, keypair: SigningKeypair) -> "Certificate":
        return Certificate(
            self.serial, self.subject_id, self.subject_public_key, self.issuer_id,
            self.not_before, self.not_after, keypair.sign(self.tbs_bytes()),
        )

    def with_signature(self, signature: bytes) -> "Certificate":
        return Certificate(
            self.serial, self.subject_id, self.subject_public_key, self.issuer_id,
            self.not_before, self.not_after, signature,
        )


@dataclass
class RevocationList:
    """Revoked serials of certificates issued by ``issuer_id``.

    Serials are only unique per issuer, so the list applies to certificates
    whose ``issuer_id`` matches.  Append-only.
    """

    issuer_id: bytes
    revoked_serials: Set[int] = field(default_factory=set)

    def revoke(self, serial: int) -> None:
        self.revoked_serials.add(int(serial))

    def is_revoked(self, cert: Certificate) -> bool:
        return cert.issuer_id == self.issuer_id and cert.serial in self.revoked_serials


@dataclass
class CertificateAuthority:
    name: str
    keypair: SigningKeypair
    cert: Certificate
    next_serial: int = 1

    @property
    def subject_id(self) -> bytes:
        return self.cert.subject_id

    def issue(self, subject_id: bytes, public: bytes, not_before: int,
              lifetime: int = DEFAULT_LIFETIME_S) -> Certificate:
        serial = self.next_serial
        self.next_serial += 1
        tbs = Certificate(
            serial,
            _check_len("subject_id", subject_id, ID_LEN),
            _check_len("public key", public, PUBKEY_LEN),
            self.cert.subject_id,
            not_before,
            not_before + lifetime,
        )
        return tbs.signed_by(self.keypair)


def gen_root_ca(rng: random.Random, now: int = DEFAULT_EPOCH,
                name: str = ROOT_CA_NAME) -> CertificateAuthority:
    keypair = SigningKeypair.generate(rng)
    subject = name_digest(name)
    cert = Certificate(1, subject, keypair.public, subject, now, now + DEFAULT_LIFETIME_S)
    return CertificateAuthority(name, keypair, cert.signed_by(keypair), next_serial=2)


def gen_intermediate_ca(root: CertificateAuthority, rng: random.Random, now: int = DEFAULT_EPOCH,
                        name: str = INTERMEDIATE_CA_NAME) -> CertificateAuthority:
    keypair = SigningKeypair.generate(rng)
    cert = root.issue(name_digest(name), keypair.public, now)
    return CertificateAuthority(name, keypair, cert)


@dataclass(frozen=True)
class CredentialSet:
    pid: bytes
    keypair: SigningKeypair
    cert: Certificate
    session_key: bytes

    def __post_init__(self):
        _check_len("pid", self.pid, ID_LEN)
        _check_len("session_key", self.session_key, KEY_LEN)
        if self.cert.subject_id != self.pid:
            raise ValueError("certificate subject does not match pseudo-ID")
        if self.cert.subject_public_key != self.keypair.public:
            raise ValueError("certificate key does not match keypair")

    def with_session_key(self, key: bytes) -> "CredentialSet":
        return CredentialSet(self.pid, self.keypair, self.cert, key)

    def to_bytes(self) -> bytes:
        """pid(16) | secret(32) | cert(153) | session_key(16)."""
        return self.pid + self.keypair.secret.to_bytes(32, "big") + self.cert.to_bytes() + self.session_key

    @classmethod
    def from_bytes(cls, data: bytes) -> "CredentialSet":
        if len(data) != CREDENTIAL_LEN:
            raise DecodeError(f"credential blob must be {CREDENTIAL_LEN} bytes, got {len(data)}")
        pid = data[:16]
        try:
            keypair = SigningKeypair.from_secret(int.from_bytes(data[16:48], "big"))
            cert = Certificate.from_bytes(data[48:48 + CERT_LEN])
            return cls(pid, keypair, cert, data[48 + CERT_LEN:])
        except ValueError as exc:
            raise DecodeError(str(exc)) from None


CREDENTIAL_LEN = ID_LEN + 32 + CERT_LEN + KEY_LEN


def issue_fob_credentials(intermediate: CertificateAuthority, vin: str, rng: random.Random,
                          now: int = DEFAULT_EPOCH) -> Tuple[CredentialSet, bytes]:
    """Fresh fob identity, keypair, certificate and initial session key.

    Returns the credentials and the ``rand_ca`` used to blind the pseudo-ID.
    """
    id_fob = rng.randbytes(ID_LEN)
    rand_ca = rng.randbytes(ID_LEN)
    rand_init = rng.randbytes(KEY_LEN)
    pid = derive_pseudo_id(id_fob, vin, rand_ca)
    keypair = SigningKeypair.generate(rng)
    cert = intermediate.issue(pid, keypair.public, now)
    return CredentialSet(pid, keypair, cert, rand_init), rand_ca


def _within(cert: Certificate, now: int) -> bool:
    return cert.not_before <= now <= cert.not_after


def verify_chain(cert: Certificate, chain: Sequence[Certificate],
                 crl: Optional[RevocationList], now: int) -> bool:
    """Validate ``cert`` up to the last element of ``chain``.

    ``chain`` runs from the certificate's issuer to a self-signed root.  Every
    link must name its issuer correctly, carry a valid signature and be
    within its validity window, and none may appear on ``crl``.
    """
    if not chain:
        return False
    path: List[Certificate] = [cert, *chain]
    for child, parent in zip(path, path[1:]):
        if child.issuer_id != parent.subject_id:
            return False
        if not verify_signature(parent.subject_public_key, child.tbs_bytes(), child.signature):
            return False
    root = path[-1]
    if root.issuer_id != root.subject_id:
        return False
    if not verify_signature(root.subject_public_key, root.tbs_bytes(), root.signature):
        return False
    for c in path:
        if not _within(c, now):
            return False
        if crl is not None and crl.is_revoked(c):
            return False
    return True
