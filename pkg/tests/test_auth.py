"""Password hashing and bearer-token issue/verify behavior."""

import base64
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotdesk.auth import (
    Claims,
    TokenSigner,
    check_password,
    consumer_key,
    device_key,
    hash_password,
    signin,
)
from iotdesk.errors import Forbidden, Invalid, NotFound, Unauthorized
from iotdesk.store import EntityStore


@pytest.fixture
def signer():
    return TokenSigner("unit-test-secret")


# -- passwords -------------------------------------------------------------


def test_hash_password_verifies_and_salts():
    stored = hash_password("hunter2")
    assert stored.startswith("pbkdf2_sha256$")
    assert check_password("hunter2", stored)
    assert not check_password("hunter3", stored)
    # fresh salt each call: same password, different encodings
    assert hash_password("hunter2") != stored


def test_hash_password_rejects_empty():
    with pytest.raises(Invalid):
        hash_password("")


def test_check_password_tolerates_garbage_stored_values():
    assert not check_password("x", "not-a-hash")
    assert not check_password("x", "pbkdf2_sha256$abc$zz$zz")
    assert not check_password("x", "md5$1$00$00")


# -- claims ----------------------------------------------------------------


def test_claims_role_only_on_user_tokens():
    Claims("user", 1, role="admin")
    with pytest.raises(Invalid):
        Claims("user", 1)  # user without role
    with pytest.raises(Invalid):
        Claims("device", 1, role="user")  # device with role
    with pytest.raises(Invalid):
        Claims("robot", 1)
    with pytest.raises(Invalid):
        Claims("device", 0)


# -- token round trip ------------------------------------------------------


def test_issue_verify_round_trip(signer):
    for claims in (
        Claims("user", 7, role="admin", issued_at=123),
        Claims("user", 8, role="user", issued_at=0),
        Claims("device", 3, issued_at=55),
        Claims("consumer", 12, issued_at=99),
    ):
        token = signer.issue(claims)
        assert token.count(".") == 2
        assert signer.verify(token, claims.subject_kind) == claims


def test_verify_enforces_subject_kind(signer):
    token = signer.issue(Claims("device", 3))
    with pytest.raises(Unauthorized):
        signer.verify(token, "user")
    with pytest.raises(Unauthorized):
        signer.verify(token, "consumer")
    with pytest.raises(Invalid):
        signer.verify(token, "gateway")


def test_verify_rejects_other_secret(signer):
    token = signer.issue(Claims("user", 1, role="user"))
    other = TokenSigner("a-different-secret")
    with pytest.raises(Unauthorized):
        other.verify(token, "user")


def test_verify_rejects_malformed_shapes(signer):
    for bad in ("", "a.b", "a.b.c.d", "just-some-text", "..", "a..c"):
        with pytest.raises(Unauthorized):
            signer.verify(bad, "user")


def test_verify_rejects_non_canonical_base64(signer):
    token = signer.issue(Claims("user", 1, role="user"))
    header, payload, sig = token.split(".")
    # '=' padding restored, '+/' alphabet, or trailing-bit variants must all fail
    padded = base64.urlsafe_b64encode(
        base64.urlsafe_b64decode(payload + "=" * (-len(payload) % 4))
    ).decode()
    if padded != payload:
        with pytest.raises(Unauthorized):
            signer.verify(f"{header}.{padded}.{sig}", "user")
    with pytest.raises(Unauthorized):
        signer.verify(f"{header}.{payload}.{sig}==", "user")


def test_expiry_honored_when_ttl_set():
    expiring = TokenSigner("s3", ttl_seconds=60)
    token = expiring.issue(Claims("user", 1, role="user", issued_at=1_000))
    assert expiring.verify(token, "user", now_s=1_059).subject_id == 1
    with pytest.raises(Unauthorized):
        expiring.verify(token, "user", now_s=1_060)
    # no ttl -> no exp claim -> never expires
    forever = TokenSigner("s3")
    token = forever.issue(Claims("user", 1, role="user", issued_at=1_000))
    assert forever.verify(token, "user", now_s=10**10).subject_id == 1


def test_token_decodes_with_plain_base64_tools(signer):
    token = signer.issue(Claims("user", 42, role="admin", issued_at=7))
    header_b64, payload_b64, _ = token.split(".")

    def decode(seg):
        return json.loads(base64.urlsafe_b64decode(seg + "=" * (-len(seg) % 4)))

    assert decode(header_b64) == {"alg": "HS256", "typ": "JWT"}
    assert decode(payload_b64) == {"sub": 42, "kind": "user", "role": "admin", "iat": 7}


_TOKEN_ALPHABET = st.characters(min_codepoint=33, max_codepoint=126)


@settings(max_examples=200, deadline=None)
@given(
    kind=st.sampled_from(["user", "device", "consumer"]),
    subject=st.integers(min_value=1, max_value=10**6),
    position=st.integers(min_value=0),
    replacement=_TOKEN_ALPHABET,
    dropped=st.booleans(),
)
def test_any_single_character_edit_fails_verification(kind, subject, position, replacement, dropped):
    signer = TokenSigner("property-secret")
    role = "user" if kind == "user" else None
    token = signer.issue(Claims(kind, subject, role=role, issued_at=11))
    pos = position % len(token)
    if dropped:
        mutated = token[:pos] + token[pos + 1 :]
    else:
        if token[pos] == replacement:
            replacement = "#" if replacement != "#" else "!"
        mutated = token[:pos] + replacement + token[pos + 1 :]
    assert mutated != token
    with pytest.raises(Unauthorized):
        signer.verify(mutated, kind)


# -- credential flows ------------------------------------------------------


def _store_with_user():
    store = EntityStore()
    user = store.add_user("Ada", "ada", hash_password("pw-ada"), "user")
    return store, user


def test_signin_success_and_uniform_failure(signer):
    store, user = _store_with_user()
    token = signin(store, signer, "ada", "pw-ada", now_s=100.0)
    claims = signer.verify(token, "user")
    assert (claims.subject_id, claims.role, claims.issued_at) == (user.id, "user", 100)

    with pytest.raises(Unauthorized) as wrong_pw:
        signin(store, signer, "ada", "nope", now_s=100.0)
    with pytest.raises(Unauthorized) as unknown:
        signin(store, signer, "nobody", "nope", now_s=100.0)
    # unknown user and bad password are indistinguishable
    assert str(wrong_pw.value) == str(unknown.value)


def test_device_and_consumer_keys_check_ownership(signer):
    store, owner = _store_with_user()
    intruder = store.add_user("Eve", "eve", hash_password("pw-eve"), "user")
    device = store.add_device(owner.id, "thermostat")
    consumer = store.add_consumer(owner.id, "dashboard")

    owner_claims = Claims("user", owner.id, role="user")
    intruder_claims = Claims("user", intruder.id, role="user")

    dev_token = device_key(store, signer, owner_claims, device.id, now_s=5.0)
    assert signer.verify(dev_token, "device").subject_id == device.id
    con_token = consumer_key(store, signer, owner_claims, consumer.id, now_s=5.0)
    assert signer.verify(con_token, "consumer").subject_id == consumer.id

    with pytest.raises(Forbidden):
        device_key(store, signer, intruder_claims, device.id, now_s=5.0)
    with pytest.raises(Forbidden):
        consumer_key(store, signer, intruder_claims, consumer.id, now_s=5.0)
    with pytest.raises(NotFound):
        device_key(store, signer, owner_claims, 999, now_s=5.0)
    with pytest.raises(NotFound):
        consumer_key(store, signer, owner_claims, 999, now_s=5.0)
