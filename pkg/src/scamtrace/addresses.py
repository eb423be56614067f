"""Cryptocurrency address recognition.

Candidates are maximal runs of ASCII alphanumerics. A run is only reported
when it passes the chain's checksum: Base58Check or Bech32/Bech32m for
Bitcoin, EIP-55 for mixed-case Ethereum addresses.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass

from Crypto.Hash import keccak

B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(B58_ALPHABET)}

BECH32_CHARSET = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
_BECH32_INDEX = {c: i for i, c in enumerate(BECH32_CHARSET)}
_BECH32_CONST = 1
_BECH32M_CONST = 0x2BC830A3

_CANDIDATE = re.compile(r"[0-9A-Za-z]+")
_ETH_SHAPE = re.compile(r"0x[0-9a-fA-F]{40}")


class Chain(str, enum.Enum):
    BITCOIN = "Bitcoin"
    ETHEREUM = "Ethereum"


@dataclass(frozen=True, order=True)
class CryptoAddress:
    chain: Chain
    canonical: str

    def __str__(self) -> str:
        return self.canonical


# -- Base58Check ------------------------------------------------------------


def b58decode(s: str) -> bytes:
    n = 0
    for ch in s:
        n = n * 58 + _B58_INDEX[ch]
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    pad = len(s) - len(s.lstrip("1"))
    return b"\x00" * pad + body


def b58encode(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = []
    while n:
        n, rem = divmod(n, 58)
        out.append(B58_ALPHABET[rem])
    pad = len(data) - len(data.lstrip(b"\x00"))
    return "1" * pad + "".join(reversed(out))


def _double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def b58check_encode(version: int, payload: bytes) -> str:
    raw = bytes([version]) + payload
    return b58encode(raw + _double_sha256(raw)[:4])


def is_base58check_address(token: str) -> bool:
    if not 26 <= len(token) <= 35 or token[0] not in "13":
        return False
    if any(ch not in _B58_INDEX for ch in token):
        return False
    raw = b58decode(token)
    if len(raw) != 25:
        return False
    return raw[21:] == _double_sha256(raw[:21])[:4]


# -- Bech32 / Bech32m -------------------------------------------------------


def _bech32_polymod(values: list[int]) -> int:
    gen = (0x3B6A57B2, 0x26508E6D, 0x1EA119FA, 0x3D4233DD, 0x2A1462B3)
    chk = 1
    for v in values:
        top = chk >> 25
        chk = (chk & 0x1FFFFFF) << 5 ^ v
        for i in range(5):
            chk ^= gen[i] if (top >> i) & 1 else 0
    return chk


def _hrp_expand(hrp: str) -> list[int]:
    return [ord(c) >> 5 for c in hrp] + [0] + [ord(c) & 31 for c in hrp]


def _convertbits(data: list[int], frombits: int, tobits: int) -> list[int] | None:
    acc = bits = 0
    ret = []
    maxv = (1 << tobits) - 1
    for value in data:
        acc = (acc << frombits) | value
        bits += frombits
        while bits >= tobits:
            bits -= tobits
            ret.append((acc >> bits) & maxv)
    if bits >= frombits or ((acc << (tobits - bits)) & maxv):
        return None
    return ret


def is_segwit_address(token: str, hrp: str = "bc") -> bool:
    """Bech32 (witness v0) or Bech32m (v1+) mainnet segwit address check."""
    if token.lower() != token and token.upper() != token:
        return False
    s = token.lower()
    if not s.startswith(hrp + "1") or len(s) > 90:
        return False
    data_part = s[len(hrp) + 1 :]
    if len(data_part) < 6 or any(c not in _BECH32_INDEX for c in data_part):
        return False
    data = [_BECH32_INDEX[c] for c in data_part]
    const = _bech32_polymod(_hrp_expand(hrp) + data)
    if const not in (_BECH32_CONST, _BECH32M_CONST):
        return False
    values = data[:-6]
    if not values:
        return False
    version = values[0]
    program = _convertbits(values[1:], 5, 8)
    if version > 16 or program is None or not 2 <= len(program) <= 40:
        return False
    if version == 0:
        return const == _BECH32_CONST and len(program) in (20, 32)
    return const == _BECH32M_CONST


# -- EIP-55 -----------------------------------------------------------------


def keccak256(data: bytes) -> bytes:
    return keccak.new(digest_bits=256, data=data).digest()


def eip55_checksum(address: str) -> str:
    """Return the EIP-55 mixed-case form of a ``0x``-prefixed hex address."""
    hex_part = address[2:].lower()
    digest = keccak256(hex_part.encode("ascii")).hex()
    out = [
        ch.upper() if ch.isalpha() and int(digest[i], 16) >= 8 else ch
        for i, ch in enumerate(hex_part)
    ]
    return "0x" + "".join(out)


def is_ethereum_address(token: str) -> bool:
    if not _ETH_SHAPE.fullmatch(token):
        return False
    hex_part = token[2:]
    if hex_part == hex_part.lower() or hex_part == hex_part.upper():
        return True
    return eip55_checksum(token) == token


# -- extraction -------------------------------------------------------------


def classify_token(token: str) -> CryptoAddress | None:
    """Return the address a single candidate token denotes, if it validates."""
    if token.startswith("0x"):
        if is_ethereum_address(token):
            return CryptoAddress(Chain.ETHEREUM, token.lower())
        return None
    if token[:3].lower() == "bc1":
        if is_segwit_address(token):
            return CryptoAddress(Chain.BITCOIN, token.lower())
        return None
    if is_base58check_address(token):
        return CryptoAddress(Chain.BITCOIN, token)
    return None


def extract_addresses(text: str) -> set[CryptoAddress]:
    found = set()
    for m in _CANDIDATE.finditer(text):
        addr = classify_token(m.group())
        if addr is not None:
            found.add(addr)
    return found


def parse_address(value: str, chain: Chain | str | None = None) -> CryptoAddress:
    """Validate a single address string from a data file.

    Raises ``ValueError`` if it does not validate (or is on another chain).
    """
    addr = classify_token(value.strip())
    if addr is None:
        raise ValueError(f"not a valid address: {value!r}")
    if chain is not None and addr.chain != Chain(chain):
        raise ValueError(f"{value!r} is not a {Chain(chain).value} address")
    return addr
