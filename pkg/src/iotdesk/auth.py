"""Bearer tokens for the three subject kinds: user, device, consumer.

Tokens use JWT compact serialization (base64url header.payload.signature)
signed with HMAC-SHA256 over a shared platform secret, so any third-party
JWT tool can decode them. Verification is strict: segments must be
canonical base64url, the signature must match byte-for-byte, and the
subject kind must equal what the endpoint expects. Any single-character
mutation of a token therefore fails verification.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets
from dataclasses import dataclass

from .errors import Forbidden, Invalid, Unauthorized
from .store import EntityStore

SUBJECT_KINDS = ("user", "device", "consumer")

_HEADER_JSON = json.dumps({"alg": "HS256", "typ": "JWT"}, separators=(",", ":"), sort_keys=True)

# -- password hashing -----------------------------------------------------

PBKDF2_ITERATIONS = 10_000  # artifact scale; the scheme, not the work factor, is the contract


def hash_password(password: str, *, iterations: int = PBKDF2_ITERATIONS,
                  _salt: bytes | None = None) -> str:
    if not password:
        raise Invalid("password must not be empty")
    salt = _salt if _salt is not None else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, iterations)
    return f"pbkdf2_sha256${iterations}${salt.hex()}${digest.hex()}"


def check_password(password: str, stored: str) -> bool:
    try:
        scheme, iters, salt_hex, digest_hex = stored.split("$")
        if scheme != "pbkdf2_sha256":
            return False
        digest = hashlib.pbkdf2_hmac("sha256", password.encode(), bytes.fromhex(salt_hex),
                                     int(iters))
        return hmac.compare_digest(digest.hex(), digest_hex)
    except (ValueError, TypeError):
        return False


# -- claims and tokens ----------------------------------------------------


@dataclass(frozen=True)
class Claims:
    subject_kind: str
    subject_id: int
    role: str | None = None  # present iff subject_kind == "user"
    issued_at: int = 0  # seconds since epoch

    def __post_init__(self):
        if self.subject_kind not in SUBJECT_KINDS:
            raise Invalid(f"unknown subject kind {self.subject_kind!r}")
        if self.subject_id <= 0:
            raise Invalid("subject_id must be positive")
        if (self.role is not None) != (self.subject_kind == "user"):
            raise Invalid("role is carried by user tokens only")


def _b64url_encode(raw: bytes) -> str:
    return base64.urlsafe_b64encode(raw).rstrip(b"=").decode("ascii")


def _b64url_decode_strict(segment: str) -> bytes:
    """Decode one token segment, rejecting non-canonical encodings.

    Re-encoding the decoded bytes must reproduce the input exactly;
    otherwise two distinct texts could decode to the same bytes and a
    mutated token could still verify.
    """
    pad = "=" * (-len(segment) % 4)
    try:
        raw = base64.urlsafe_b64decode(segment + pad)
    except (ValueError, TypeError) as exc:
        raise Unauthorized("malformed token segment") from exc
    if _b64url_encode(raw) != segment:
        raise Unauthorized("non-canonical token segment")
    return raw


class TokenSigner:
    """Issues and verifies platform bearer tokens.

    Pure function of (secret, ttl); safe to share across any number of
    concurrent request handlers.
    """

    def __init__(self, secret: str, ttl_seconds: int | None = None):
        if not secret:
            raise Invalid("auth secret must not be empty")
        self._key = secret.encode()
        self.ttl_seconds = ttl_seconds

    def _sign(self, signing_input: bytes) -> bytes:
        return hmac.new(self._key, signing_input, hashlib.sha256).digest()

    def issue(self, claims: Claims) -> str:
        payload: dict = {"sub": claims.subject_id, "kind": claims.subject_kind,
                         "iat": claims.issued_at}
        if claims.role is not None:
            payload["role"] = claims.role
        if self.ttl_seconds is not None:
            payload["exp"] = claims.issued_at + self.ttl_seconds
        header_b64 = _b64url_encode(_HEADER_JSON.encode())
        payload_b64 = _b64url_encode(
            json.dumps(payload, separators=(",", ":"), sort_keys=True).encode())
        signing_input = f"{header_b64}.{payload_b64}".encode("ascii")
        return f"{header_b64}.{payload_b64}.{_b64url_encode(self._sign(signing_input))}"

    def verify(self, token: str, expected_kind: str, *, now_s: float | None = None) -> Claims:
        if expected_kind not in SUBJECT_KINDS:
            raise Invalid(f"unknown subject kind {expected_kind!r}")
        if not isinstance(token, str) or token.count(".") != 2:
            raise Unauthorized("malformed token")
        header_b64, payload_b64, sig_b64 = token.split(".")
        signature = _b64url_decode_strict(sig_b64)
        signing_input = f"{header_b64}.{payload_b64}".encode("ascii", errors="replace")
        if not hmac.compare_digest(signature, self._sign(signing_input)):
            raise Unauthorized("bad signature")
        _b64url_decode_strict(header_b64)
        try:
            payload = json.loads(_b64url_decode_strict(payload_b64))
            claims = Claims(subject_kind=payload["kind"], subject_id=payload["sub"],
                            role=payload.get("role"), issued_at=payload["iat"])
        except (KeyError, TypeError, ValueError, Invalid) as exc:
            raise Unauthorized("malformed claims") from exc
        if claims.subject_kind != expected_kind:
            raise Unauthorized(f"token is for a {claims.subject_kind}, not a {expected_kind}")
        exp = payload.get("exp")
        if exp is not None and now_s is not None and now_s >= exp:
            raise Unauthorized("token expired")
        return claims


# -- credential flows -----------------------------------------------------


def signin(store: EntityStore, signer: TokenSigner, username: str, password: str,
           now_s: float) -> str:
    """Exchange username/password for a user token.

    Unknown username and wrong password are indistinguishable to the caller.
    """
    user = store.user_by_username(username)
    if user is None or not check_password(password, user.password_hash):
        raise Unauthorized("bad credentials")
    claims = Claims("user", user.id, role=user.role, issued_at=int(now_s))
    return signer.issue(claims)


def device_key(store: EntityStore, signer: TokenSigner, actor: Claims, device_id: int,
               now_s: float) -> str:
    device = store.get_device(device_id)
    if device.owner_user_id != actor.subject_id:
        raise Forbidden("device belongs to another user")
    return signer.issue(Claims("device", device_id, issued_at=int(now_s)))


def consumer_key(store: EntityStore, signer: TokenSigner, actor: Claims, consumer_id: int,
                 now_s: float) -> str:
    consumer = store.get_consumer(consumer_id)
    if consumer.owner_user_id != actor.subject_id:
        raise Forbidden("consumer belongs to another user")
    return signer.issue(Claims("consumer", consumer_id, issued_at=int(now_s)))


__all__ = [
    "Claims", "TokenSigner", "signin", "device_key", "consumer_key",
    "hash_password", "check_password", "SUBJECT_KINDS",
]
