"""A small SIP subset: requests INVITE/ACK/BYE/REGISTER and the responses
100/180/200/486, with CRLF framing and a Content-Length checked body."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

METHODS = ("INVITE", "ACK", "BYE", "REGISTER")
REASONS = {100: "Trying", 180: "Ringing", 200: "OK", 486: "Busy Here"}
VERSION = "SIP/2.0"

_MANDATORY = ("From", "To", "Call-ID", "CSeq", "Content-Length")
_CANONICAL = {name.lower(): name for name in ("Via",) + _MANDATORY}
_TOKEN = re.compile(r"[^\s@:<>;,]+")
_HEADER_NAME = re.compile(r"[A-Za-z0-9!%'*+.^_`|~-]+")


def _clean(value: str) -> bool:
    return value == value.strip() and not any(c in value for c in "\r\n\x00")


class SipError(ValueError):
    """Base class of every parse/construction error."""


class MalformedStartLine(SipError):
    pass


class MissingHeader(SipError):
    def __init__(self, name: str) -> None:
        super().__init__(f"missing header {name}")
        self.name = name


class BadCSeq(SipError):
    pass


class LengthMismatch(SipError):
    pass


class MalformedHeader(SipError):
    """Header line, URI or encoding that does not fit the grammar."""


class NotAnInvite(SipError):
    pass


@dataclass(frozen=True)
class SipUri:
    user: str
    host: str
    scheme: str = "sip"

    def __post_init__(self) -> None:
        if self.scheme != "sip":
            raise MalformedHeader(f"unsupported scheme {self.scheme!r}")
        for part in (self.user, self.host):
            if not isinstance(part, str) or not _TOKEN.fullmatch(part):
                raise MalformedHeader(f"bad uri component {part!r}")

    @classmethod
    def parse(cls, text: str) -> "SipUri":
        m = re.fullmatch(r"sip:([^@]+)@(.+)", text)
        if not m:
            raise MalformedHeader(f"bad uri {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return f"sip:{self.user}@{self.host}"


def as_uri(value: Union[SipUri, str]) -> SipUri:
    return value if isinstance(value, SipUri) else SipUri.parse(value)


@dataclass(frozen=True)
class SipMessage:
    call_id: str
    from_uri: SipUri
    to_uri: SipUri
    cseq: int
    cseq_method: str
    method: Optional[str] = None
    request_uri: Optional[SipUri] = None
    status: Optional[int] = None
    reason: Optional[str] = None
    body: str = ""
    via: Optional[str] = None
    extras: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self) -> None:
        if (self.method is None) == (self.status is None):
            raise SipError("exactly one of method/status must be set")
        if self.method is not None:
            if self.method not in METHODS:
                raise MalformedStartLine(f"unsupported method {self.method!r}")
            if self.reason is not None:
                raise SipError("requests carry no reason phrase")
            if self.request_uri is None:
                object.__setattr__(self, "request_uri", self.to_uri)
        else:
            if self.status not in REASONS:
                raise MalformedStartLine(f"unsupported status {self.status!r}")
            if self.request_uri is not None:
                raise SipError("responses carry no request-uri")
            if self.reason is None:
                object.__setattr__(self, "reason", REASONS[self.status])
        if not self.call_id or not _TOKEN.fullmatch(self.call_id):
            raise MalformedHeader(f"bad Call-ID {self.call_id!r}")
        if not isinstance(self.cseq, int) or not 1 <= self.cseq < 10**9 \
                or self.cseq_method not in METHODS:
            raise BadCSeq(f"{self.cseq} {self.cseq_method}")
        if self.reason is not None and (not self.reason or not _clean(self.reason)):
            raise MalformedStartLine(f"bad reason phrase {self.reason!r}")
        if self.via is not None and not _clean(self.via):
            raise MalformedHeader(f"bad Via {self.via!r}")
        for name, value in self.extras:
            if not _HEADER_NAME.fullmatch(name) or name.lower() in _CANONICAL or not _clean(value):
                raise MalformedHeader(f"bad extra header {name!r}")

    @property
    def kind(self) -> str:
        return "request" if self.method is not None else "response"

    @property
    def is_request(self) -> bool:
        return self.method is not None

    def describe(self) -> str:
        head = self.method if self.is_request else str(self.status)
        return f"{head} {self.call_id}"


def request(method: str, call_id: str, from_uri: Union[SipUri, str], to_uri: Union[SipUri, str],
            cseq: int = 1, body: str = "") -> SipMessage:
    return SipMessage(call_id=call_id, from_uri=as_uri(from_uri), to_uri=as_uri(to_uri),
                      cseq=cseq, cseq_method=method, method=method, body=body)


def response(to_request: SipMessage, status: int, body: str = "") -> SipMessage:
    return SipMessage(call_id=to_request.call_id, from_uri=to_request.from_uri,
                      to_uri=to_request.to_uri, cseq=to_request.cseq,
                      cseq_method=to_request.cseq_method, status=status, body=body)


def make_busy_response(invite: SipMessage) -> SipMessage:
    if not invite.is_request or invite.method != "INVITE":
        raise NotAnInvite(invite.describe())
    return response(invite, 486)


def serialize(msg: SipMessage) -> bytes:
    if msg.is_request:
        lines = [f"{msg.method} {msg.request_uri} {VERSION}"]
    else:
        lines = [f"{VERSION} {msg.status} {msg.reason}"]
    if msg.via is not None:
        lines.append(f"Via: {msg.via}")
    body = msg.body.encode("utf-8")
    lines += [
        f"From: <{msg.from_uri}>",
        f"To: <{msg.to_uri}>",
        f"Call-ID: {msg.call_id}",
        f"CSeq: {msg.cseq} {msg.cseq_method}",
        f"Content-Length: {len(body)}",
    ]
    lines += [f"{name}: {value}" for name, value in msg.extras]
    return ("\r\n".join(lines) + "\r\n\r\n").encode("utf-8") + body


def _parse_start_line(line: str) -> dict:
    parts = line.split(" ")
    if len(parts) >= 3 and parts[0] == VERSION:
        code = parts[1]
        if not (len(code) == 3 and code.isdigit()) or int(code) not in REASONS:
            raise MalformedStartLine(line)
        reason = " ".join(parts[2:])
        if not reason or reason != reason.strip():
            raise MalformedStartLine(line)
        return {"status": int(code), "reason": reason}
    if len(parts) == 3 and parts[0] in METHODS and parts[2] == VERSION:
        try:
            ruri = SipUri.parse(parts[1])
        except SipError:
            raise MalformedStartLine(line) from None
        return {"method": parts[0], "request_uri": ruri}
    raise MalformedStartLine(line)


def _parse_name_addr(value: str) -> SipUri:
    if not (value.startswith("<") and value.endswith(">")):
        raise MalformedHeader(f"expected <uri>, got {value!r}")
    return SipUri.parse(value[1:-1])


def parse(data: Union[bytes, str]) -> SipMessage:
    """Parse one complete message; raises a :class:`SipError` subclass."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    head, sep, body_bytes = data.partition(b"\r\n\r\n")
    try:
        head_text = head.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedStartLine("undecodable header block") from None
    lines = head_text.split("\r\n")
    fields = _parse_start_line(lines[0])
    if not sep:
        raise MalformedHeader("no blank line after headers")

    known: dict[str, str] = {}
    extras: list[tuple[str, str]] = []
    for line in lines[1:]:
        name, colon, value = line.partition(":")
        if not colon or not _HEADER_NAME.fullmatch(name) or "\r" in value or "\n" in value:
            raise MalformedHeader(f"bad header line {line!r}")
        value = value.strip()
        canonical = _CANONICAL.get(name.lower())
        if canonical is None:
            extras.append((name, value))
        elif canonical in known:
            raise MalformedHeader(f"duplicate {canonical}")
        else:
            known[canonical] = value
    for name in _MANDATORY:
        if name not in known:
            raise MissingHeader(name)

    m = re.fullmatch(r"(\d{1,9}) ([A-Z]+)", known["CSeq"])
    if not m or int(m.group(1)) < 1 or m.group(2) not in METHODS:
        raise BadCSeq(known["CSeq"])
    if not known["Content-Length"].isdigit():
        raise LengthMismatch(f"bad Content-Length {known['Content-Length']!r}")
    if int(known["Content-Length"]) != len(body_bytes):
        raise LengthMismatch(f"Content-Length {known['Content-Length']} != {len(body_bytes)}")
    try:
        body = body_bytes.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedHeader("undecodable body") from None

    return SipMessage(
        call_id=known["Call-ID"],
        from_uri=_parse_name_addr(known["From"]),
        to_uri=_parse_name_addr(known["To"]),
        cseq=int(m.group(1)),
        cseq_method=m.group(2),
        body=body,
        via=known.get("Via"),
        extras=tuple(extras),
        **fields,
    )
