from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microims import sip
from microims.sip import (BadCSeq, LengthMismatch, MalformedHeader, MalformedStartLine,
                          MissingHeader, NotAnInvite, SipError, SipMessage, SipUri)

FIXTURES = Path(__file__).parent / "fixtures"
ALICE = SipUri("alice", "ims.test")
BOB = SipUri("bob", "ims.test")


def test_parse_invite_fixture():
    msg = sip.parse((FIXTURES / "invite.sip").read_bytes())
    assert msg.is_request and msg.method == "INVITE"
    assert msg.to_uri.user == "bob"
    assert msg.via == "SIP/2.0/UDP ue.ims.test"
    assert msg.body == ""


def test_parse_busy_fixture_case_insensitive_headers():
    msg = sip.parse((FIXTURES / "busy.sip").read_bytes())
    assert msg.kind == "response" and msg.status == 486
    assert msg.reason == "Busy Here"
    assert msg.body == "hello"
    assert msg.extras == (("X-Pouch", "p3.ims.test"),)


def test_serialize_canonicalises_header_case():
    raw = (FIXTURES / "busy.sip").read_bytes()
    out = sip.serialize(sip.parse(raw))
    assert b"\r\nFrom: <sip:alice@ims.test>\r\n" in out
    assert b"\r\nCall-ID: c1\r\n" in out


def test_invite_fixture_is_canonical():
    raw = (FIXTURES / "invite.sip").read_bytes()
    assert sip.serialize(sip.parse(raw)) == raw


def test_bad_start_line():
    with pytest.raises(MalformedStartLine):
        sip.parse(b"HELLO x y\r\n\r\n")


def test_ok_response_ends_with_content_length_zero():
    out = sip.serialize(sip.response(sip.request("INVITE", "c9", ALICE, BOB), 200))
    assert out.endswith(b"Content-Length: 0\r\n\r\n")
    assert out.startswith(b"SIP/2.0 200 OK\r\n")


def test_serialize_is_deterministic():
    a = sip.request("BYE", "c2", ALICE, BOB, cseq=2)
    b = sip.request("BYE", "c2", ALICE, BOB, cseq=2)
    assert sip.serialize(a) == sip.serialize(b)


def test_busy_response_copies_dialog_fields():
    inv = sip.request("INVITE", "c1", ALICE, BOB, cseq=7)
    busy = sip.make_busy_response(inv)
    assert (busy.status, busy.call_id, busy.cseq, busy.cseq_method) == (486, "c1", 7, "INVITE")


def test_busy_response_needs_invite():
    with pytest.raises(NotAnInvite):
        sip.make_busy_response(sip.request("BYE", "c1", ALICE, BOB))


@pytest.mark.parametrize("raw, err", [
    (b"INVITE sip:bob@ims.test SIP/2.0\r\nFrom: <sip:a@b>\r\nTo: <sip:bob@ims.test>\r\n"
     b"CSeq: 1 INVITE\r\nContent-Length: 0\r\n\r\n", MissingHeader),
    (b"INVITE sip:bob@ims.test SIP/2.0\r\nFrom: <sip:a@b>\r\nTo: <sip:bob@ims.test>\r\n"
     b"Call-ID: x\r\nCSeq: one INVITE\r\nContent-Length: 0\r\n\r\n", BadCSeq),
    (b"INVITE sip:bob@ims.test SIP/2.0\r\nFrom: <sip:a@b>\r\nTo: <sip:bob@ims.test>\r\n"
     b"Call-ID: x\r\nCSeq: 1 INVITE\r\nContent-Length: 4\r\n\r\nab", LengthMismatch),
    (b"INVITE sip:bob@ims.test SIP/2.0\r\nFrom: sip:a@b\r\nTo: <sip:bob@ims.test>\r\n"
     b"Call-ID: x\r\nCSeq: 1 INVITE\r\nContent-Length: 0\r\n\r\n", MalformedHeader),
    (b"SIP/2.0 999 Odd\r\n\r\n", MalformedStartLine),
], ids=["no-call-id", "bad-cseq", "short-body", "bare-uri", "unknown-status"])
def test_classified_errors(raw, err):
    with pytest.raises(err):
        sip.parse(raw)


def test_missing_header_names_the_header():
    raw = (FIXTURES / "invite.sip").read_bytes().replace(b"Call-ID: c1\r\n", b"")
    with pytest.raises(MissingHeader) as exc:
        sip.parse(raw)
    assert exc.value.name == "Call-ID"


def test_uri_round_trip_and_validation():
    assert SipUri.parse(str(ALICE)) == ALICE
    with pytest.raises(MalformedHeader):
        SipUri("a b", "ims.test")


token = st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"),
                                       whitelist_characters="-._~!*", max_codepoint=0x2FF),
                min_size=1, max_size=12)
uris = st.builds(SipUri, token, token)
header_value = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126),
                       min_size=1, max_size=20)
extras = st.lists(st.tuples(st.sampled_from(["X-Pouch", "Max-Forwards", "Contact", "X-Trace"]),
                            header_value), max_size=3).map(tuple)
bodies = st.text(max_size=40)


@st.composite
def messages(draw) -> SipMessage:
    common = dict(call_id=draw(token), from_uri=draw(uris), to_uri=draw(uris),
                  cseq=draw(st.integers(1, 10**9 - 1)),
                  cseq_method=draw(st.sampled_from(sip.METHODS)),
                  body=draw(bodies), via=draw(st.none() | header_value), extras=draw(extras))
    if draw(st.booleans()):
        return SipMessage(method=draw(st.sampled_from(sip.METHODS)), request_uri=draw(uris),
                          **common)
    return SipMessage(status=draw(st.sampled_from(sorted(sip.REASONS))), **common)


@settings(max_examples=300, deadline=None)
@given(messages())
def test_round_trip(msg):
    wire = sip.serialize(msg)
    assert sip.parse(wire) == msg
    assert sip.serialize(sip.parse(wire)) == wire


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=300))
def test_fuzz_never_escapes_classification(data):
    try:
        sip.parse(data)
    except SipError:
        pass


@settings(max_examples=200, deadline=None)
@given(messages(), st.data())
def test_mutated_messages_are_classified(msg, data):
    wire = bytearray(sip.serialize(msg))
    i = data.draw(st.integers(0, len(wire) - 1))
    wire[i] = data.draw(st.integers(0, 255))
    try:
        sip.parse(bytes(wire))
    except SipError:
        pass
