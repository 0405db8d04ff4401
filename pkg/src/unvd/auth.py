"""Compact HMAC-SHA256 signed auth tokens with an expiry claim."""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
import time

from .errors import UnvdError


class InvalidToken(UnvdError):
    pass


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _unb64(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


def issue_token(subject: str, secret: str, lifetime_seconds: float = 3600.0) -> str:
    payload = json.dumps({"sub": subject, "exp": time.time() + lifetime_seconds})
    body = _b64(payload.encode("utf-8"))
    sig = hmac.new(secret.encode("utf-8"), body.encode("ascii"), hashlib.sha256).digest()
    return f"{body}.{_b64(sig)}"


def verify_token(token: str, secret: str) -> str:
    """Returns the subject, or raises InvalidToken on tamper/expiry."""
    try:
        body, sig_text = token.split(".")
        sig = _unb64(sig_text)
    except (ValueError, binascii.Error) as e:
        raise InvalidToken("malformed token") from e
    expected = hmac.new(secret.encode("utf-8"), body.encode("ascii"), hashlib.sha256).digest()
    if not hmac.compare_digest(sig, expected):
        raise InvalidToken("signature mismatch")
    try:
        payload = json.loads(_unb64(body))
    except (ValueError, binascii.Error) as e:
        raise InvalidToken("malformed payload") from e
    if payload.get("exp", 0) < time.time():
        raise InvalidToken("token expired")
    sub = payload.get("sub")
    if not sub:
        raise InvalidToken("missing subject")
    return sub
