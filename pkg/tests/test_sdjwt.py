from __future__ import annotations

import base64
import hashlib
import json

import pytest
from hypothesis import given, strategies as st

from ssibridge.clock import FixedClock
from ssibridge.crypto import Jwk, b64url_decode, b64url_encode, decode_compact, seeded_rng
from ssibridge.errors import (
    Expired,
    InvalidClaimName,
    InvalidLifetime,
    MalformedToken,
    NotYetValid,
    SignatureInvalid,
    SigningKeyUnavailable,
    SsiBridgeError,
    UnknownDisclosure,
    UnknownDisclosureDigest,
)
from ssibridge.sdjwt import (
    SD_JWT_TYP,
    Disclosure,
    SdJwtVc,
    credential_digest,
    disclosure_digest,
    issue_sd_jwt_vc,
    make_disclosure,
    present,
    verify_sd_jwt_vc,
)

CLAIMS = {"given_name": "Ada", "family_name": "Lovelace", "health_id": "H-42"}


def oracle_disclosure(salt: bytes, name: str, value) -> str:
    """Independent re-implementation of the disclosure encoding."""
    arr = [base64.urlsafe_b64encode(salt).decode().rstrip("="), name, value]
    raw = json.dumps(arr, separators=(",", ":"), sort_keys=True, ensure_ascii=False).encode()
    return base64.urlsafe_b64encode(raw).decode().rstrip("=")


def issue(key, clock, disclosable=CLAIMS, seed=0, **kw):
    return issue_sd_jwt_vc(key, {"iss": "https://issuer.example", "sub": "h"}, disclosable, "urn:test",
                           3600, clock, seeded_rng(seed, "salts"), **kw)


# -- disclosures -------------------------------------------------------------

def test_make_disclosure_round_trip_and_oracle():
    d = make_disclosure(bytes(16), "given_name", "Ada")
    assert d.encoded == oracle_disclosure(bytes(16), "given_name", "Ada")
    parsed = Disclosure.parse(d.encoded)
    assert (parsed.salt, parsed.claim_name, parsed.claim_value) == (bytes(16), "given_name", "Ada")
    assert make_disclosure(bytes(16), "given_name", "Ada").encoded == d.encoded


def test_disclosure_digest_is_sha256_of_serialization():
    d = make_disclosure(bytes(16), "given_name", "Ada")
    assert disclosure_digest(d) == hashlib.sha256(d.encoded.encode()).digest()
    assert len(disclosure_digest(d)) == 32


def test_different_salts_give_different_digests():
    rng = seeded_rng(5, "pairs")
    for _ in range(100):
        s1, s2 = rng.randbytes(16), rng.randbytes(16)
        if s1 == s2:
            continue
        d1, d2 = make_disclosure(s1, "n", "v"), make_disclosure(s2, "n", "v")
        assert disclosure_digest(d1) != disclosure_digest(d2)
        assert hashlib.sha256(oracle_disclosure(s1, "n", "v").encode()).digest() == disclosure_digest(d1)


def test_make_disclosure_preconditions():
    with pytest.raises(InvalidClaimName):
        make_disclosure(bytes(16), "", 1)
    with pytest.raises(ValueError):
        make_disclosure(bytes(15), "n", 1)


# -- issuance -----------------------------------------------------------------

def test_issue_three_claims_sd_digests(issuer_key, clock):
    cred = issue(issuer_key, clock)
    p = cred.payload
    assert len(cred.disclosures) == 3
    expected = sorted(
        base64.urlsafe_b64encode(hashlib.sha256(d.encoded.encode()).digest()).decode().rstrip("=")
        for d in cred.disclosures
    )
    assert p["_sd"] == expected
    assert p["_sd_alg"] == "sha-256"
    assert p["iat"] == clock.now() and p["exp"] == clock.now() + 3600
    assert verify_sd_jwt_vc(cred, [issuer_key.public()], clock).claims["given_name"] == "Ada"


def test_issue_zero_disclosable(issuer_key, clock):
    cred = issue(issuer_key, clock, disclosable={})
    assert cred.payload["_sd"] == []
    assert cred.compact == cred.issuer_jwt + "~"
    assert cred.compact.count("~") == 1


def test_issue_preconditions(issuer_key, clock):
    with pytest.raises(InvalidLifetime):
        issue_sd_jwt_vc(issuer_key, {}, {}, "v", 0, clock)
    with pytest.raises(SigningKeyUnavailable):
        issue_sd_jwt_vc(issuer_key.public(), {}, {}, "v", 10, clock)
    with pytest.raises(InvalidClaimName):
        issue_sd_jwt_vc(issuer_key, {}, {"exp": 1}, "v", 10, clock)


def test_compact_wire_format(issuer_key, clock):
    cred = issue(issuer_key, clock)
    jwt, *rest = cred.compact.split("~")
    assert rest[-1] == "" and len(rest) == 4
    assert jwt.count(".") == 2 and "=" not in cred.compact
    header = json.loads(b64url_decode(jwt.split(".")[0]))
    assert header["typ"] == SD_JWT_TYP


# -- presentation ---------------------------------------------------------------

def test_present_subsets(issuer_key, clock):
    cred = issue(issuer_key, clock)
    assert present(cred, cred.disclosable_names()) == cred
    none = present(cred, [])
    assert none.disclosures == () and none.issuer_jwt == cred.issuer_jwt
    verify_sd_jwt_vc(none, [issuer_key], clock)
    one = present(cred, {"given_name"})
    assert [d.claim_name for d in one.disclosures] == ["given_name"]
    assert "family_name" not in verify_sd_jwt_vc(one, [issuer_key], clock).claims
    with pytest.raises(UnknownDisclosure):
        present(cred, {"nickname"})


def test_every_subset_verifies(issuer_key, clock):
    cred = issue(issuer_key, clock)
    names = cred.disclosable_names()
    for mask in range(1 << len(names)):
        subset = [n for i, n in enumerate(names) if mask >> i & 1]
        out = verify_sd_jwt_vc(present(cred, subset), [issuer_key], clock)
        assert out.disclosed == frozenset(subset)


# -- verification -----------------------------------------------------------------

def test_verify_errors_are_distinct(issuer_key, clock):
    cred = issue(issuer_key, clock)
    other = Jwk.generate("other", seeded_rng(9, "o"))
    with pytest.raises(SignatureInvalid):
        verify_sd_jwt_vc(cred, [other], clock)
    with pytest.raises(Expired):
        verify_sd_jwt_vc(cred, [issuer_key], FixedClock(clock.now() + 3600))
    verify_sd_jwt_vc(cred, [issuer_key], FixedClock(clock.now() + 3599))
    with pytest.raises(NotYetValid):
        verify_sd_jwt_vc(cred, [issuer_key], FixedClock(clock.now() - 1))
    forged = make_disclosure(seeded_rng(1, "forge").randbytes(16), "given_name", "Eve")
    with pytest.raises(UnknownDisclosureDigest):
        verify_sd_jwt_vc(SdJwtVc(cred.issuer_jwt, (forged,)), [issuer_key], clock)


def test_flipped_signature_bit(issuer_key, clock):
    cred = issue(issuer_key, clock)
    h, p, s = cred.issuer_jwt.split(".")
    sig = bytearray(b64url_decode(s))
    sig[0] ^= 1
    bad = SdJwtVc(f"{h}.{p}.{b64url_encode(bytes(sig))}", cred.disclosures)
    with pytest.raises(SignatureInvalid):
        verify_sd_jwt_vc(bad, [issuer_key], clock)


def test_duplicate_disclosure_rejected(issuer_key, clock):
    cred = issue(issuer_key, clock)
    dup = SdJwtVc(cred.issuer_jwt, cred.disclosures + cred.disclosures[:1])
    with pytest.raises(UnknownDisclosureDigest):
        verify_sd_jwt_vc(dup, [issuer_key], clock)


@given(st.integers(min_value=0, max_value=2**32))
def test_random_forged_disclosure_rejected(seed):
    clock = FixedClock(1_750_000_000)
    key = Jwk.generate("i", seeded_rng(1, "i"))
    cred = issue(key, clock)
    forged = make_disclosure(seeded_rng(seed, "forged").randbytes(16), "given_name", "Ada")
    with pytest.raises(UnknownDisclosureDigest):
        verify_sd_jwt_vc(SdJwtVc(cred.issuer_jwt, (forged,)), [key], clock)


# -- properties ---------------------------------------------------------------------

json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | st.text(max_size=12),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(min_size=1, max_size=5), inner, max_size=3),
    max_leaves=6,
)
claim_names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=10).filter(
    lambda n: n not in {"iss", "sub", "vct", "iat", "exp", "cnf", "_sd", "_sd_alg", "nbf", "status"}
)


@given(st.dictionaries(claim_names, json_values, max_size=5), st.integers(0, 2**31))
def test_round_trip_property(claims, seed):
    clock = FixedClock(1_750_000_000)
    key = Jwk.generate("i", seeded_rng(2, "rt"))
    cred = issue_sd_jwt_vc(key, {"sub": "s"}, claims, "urn:x", 100, clock, seeded_rng(seed, "s"))
    again = SdJwtVc.parse(cred.compact)
    assert again == cred and again.compact == cred.compact
    assert verify_sd_jwt_vc(again, [key], clock).disclosed == frozenset(claims)


def _flip(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


@given(st.integers(min_value=0), st.booleans())
def test_tamper_property(pos, in_signature):
    clock = FixedClock(1_750_000_000)
    key = Jwk.generate("i", seeded_rng(2, "tp"))
    cred = issue(key, clock)
    h, p, s = cred.issuer_jwt.split(".")
    raw = b64url_decode(s if in_signature else p)
    mutated = b64url_encode(_flip(raw, pos % (8 * len(raw))))
    jwt = f"{h}.{p}.{mutated}" if in_signature else f"{h}.{mutated}.{s}"
    with pytest.raises(SsiBridgeError):
        verify_sd_jwt_vc(SdJwtVc(jwt, cred.disclosures), [key], clock)


def test_credential_digest_oracle_and_sensitivity(issuer_key, clock):
    cred = issue(issuer_key, clock)
    assert credential_digest(cred.compact) == hashlib.sha256(cred.compact.encode()).digest()
    assert credential_digest(cred.compact) == credential_digest(cred.compact.encode())
    assert credential_digest(cred.compact + "x") != credential_digest(cred.compact)
    assert credential_digest("abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_credential_digest_injective_on_corpus():
    clock = FixedClock(1_750_000_000)
    key = Jwk.generate("i", seeded_rng(4, "inj"))
    rng = seeded_rng(4, "corpus")
    digests = set()
    n = 10_000
    for i in range(n):
        cred = issue_sd_jwt_vc(key, {"sub": f"holder-{i}"}, {"n": i}, "urn:x", 100, clock, rng)
        digests.add(credential_digest(cred.compact))
    assert len(digests) == n
