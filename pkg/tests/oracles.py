"""Independent reference implementations used only by the tests.

None of these import from ``scamtrace``; they re-derive expected values by
a different route (pure-python Keccak, digit-array Base58, brute-force
DBSCAN, repeated-pass closure, path enumeration).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import defaultdict

# ---------------------------------------------------------------- keccak-256

_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]
_ROT = [
    [0, 36, 3, 41, 18],
    [1, 44, 10, 45, 2],
    [62, 6, 43, 15, 61],
    [28, 55, 25, 21, 56],
    [27, 20, 39, 8, 14],
]
_MASK = (1 << 64) - 1


def _rol(x, n):
    n %= 64
    return ((x << n) | (x >> (64 - n))) & _MASK


def _keccak_f(a):
    for rc in _RC:
        c = [a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4] for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rol(c[(x + 1) % 5], 1) for x in range(5)]
        a = [[a[x][y] ^ d[x] for y in range(5)] for x in range(5)]
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rol(a[x][y], _ROT[x][y])
        a = [[b[x][y] ^ (~b[(x + 1) % 5][y] & b[(x + 2) % 5][y]) for y in range(5)] for x in range(5)]
        a[0][0] ^= rc
    return a


def keccak256(data: bytes) -> bytes:
    rate = 136
    msg = bytearray(data) + b"\x01"
    while len(msg) % rate:
        msg.append(0)
    msg[-1] |= 0x80
    state = [[0] * 5 for _ in range(5)]
    for off in range(0, len(msg), rate):
        block = msg[off : off + rate]
        for i in range(rate // 8):
            x, y = i % 5, i // 5
            state[x][y] ^= int.from_bytes(block[8 * i : 8 * i + 8], "little")
        state = _keccak_f(state)
    out = b""
    for i in range(4):
        x, y = i % 5, i // 5
        out += state[x][y].to_bytes(8, "little")
    return out


def eip55_valid(addr: str) -> bool:
    if len(addr) != 42 or not addr.startswith("0x"):
        return False
    body = addr[2:]
    if any(c not in "0123456789abcdefABCDEF" for c in body):
        return False
    if body.islower() or body.isupper() or not any(c.isalpha() for c in body):
        return True
    h = keccak256(body.lower().encode()).hex()
    for ch, hc in zip(body, h):
        if ch.isalpha() and (ch.isupper() != (int(hc, 16) > 7)):
            return False
    return True


# ---------------------------------------------------------------- base58check

_B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


def base58check_valid(s: str) -> bool:
    """Digit-array long multiplication decoder (no big ints)."""
    if not (26 <= len(s) <= 35) or s[0] not in "13":
        return False
    if any(c not in _B58 for c in s):
        return False
    out = [0]  # little-endian base-256 digits
    for c in s:
        carry = _B58.index(c)
        for i in range(len(out)):
            carry += out[i] * 58
            out[i] = carry & 0xFF
            carry >>= 8
        while carry:
            out.append(carry & 0xFF)
            carry >>= 8
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    if out == [0]:
        out = []
    zeros = len(s) - len(s.lstrip("1"))
    raw = bytes([0] * zeros + out[::-1])
    if len(raw) != 25:
        return False
    chk = hashlib.sha256(hashlib.sha256(raw[:21]).digest()).digest()[:4]
    return raw[21:] == chk


# ---------------------------------------------------------------- bech32 (checksum only)


def bech32_checksum_ok(s: str) -> bool:
    charset = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
    s = s.lower()
    pos = s.rfind("1")
    hrp, data = s[:pos], s[pos + 1 :]
    if any(c not in charset for c in data) or len(data) < 6:
        return False
    values = [ord(c) >> 5 for c in hrp] + [0] + [ord(c) & 31 for c in hrp]
    values += [charset.index(c) for c in data]
    gens = [0x3B6A57B2, 0x26508E6D, 0x1EA119FA, 0x3D4233DD, 0x2A1462B3]
    chk = 1
    for v in values:
        b = chk >> 25
        chk = ((chk & 0x1FFFFFF) << 5) ^ v
        for i, g in enumerate(gens):
            if (b >> i) & 1:
                chk ^= g
    return chk in (1, 0x2BC830A3)


# ---------------------------------------------------------------- DBSCAN reference

NOISE = -1


def reference_dbscan(dist, eps, min_pts):
    """O(n^2) DBSCAN without a BFS queue.

    Core points: >= min_pts neighbours (self included). Clusters are the
    connected components of the core graph, numbered by their smallest
    core index. A border point goes to the lowest-numbered cluster that has
    a core within eps of it.
    """
    n = len(dist)
    nbr = [[j for j in range(n) if j == i or dist[i][j] <= eps] for i in range(n)]
    core = [len(nbr[i]) >= min_pts for i in range(n)]
    comp = list(range(n))
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if not core[i]:
                continue
            for j in nbr[i]:
                if core[j] and comp[j] != comp[i]:
                    m = min(comp[i], comp[j])
                    comp[i] = comp[j] = m
                    changed = True
    roots = sorted({comp[i] for i in range(n) if core[i]})
    rank = {r: k for k, r in enumerate(roots)}
    labels = [NOISE] * n
    for i in range(n):
        if core[i]:
            labels[i] = rank[comp[i]]
    for i in range(n):
        if core[i]:
            continue
        owners = [labels[j] for j in nbr[i] if core[j]]
        if owners:
            labels[i] = min(owners)
    return labels


def same_partition(a, b) -> bool:
    """Equal up to renaming of cluster ids (NOISE must match exactly)."""
    if len(a) != len(b):
        return False
    fwd, bwd = {}, {}
    for x, y in zip(a, b):
        if (x == NOISE) != (y == NOISE):
            return False
        if x == NOISE:
            continue
        if fwd.setdefault(x, y) != y or bwd.setdefault(y, x) != x:
            return False
    return True


# ---------------------------------------------------------------- pair metrics


def pair_sets(labels):
    pairs = set()
    for i, j in itertools.combinations(range(len(labels)), 2):
        if labels[i] != NOISE and labels[i] == labels[j]:
            pairs.add((i, j))
    return pairs


def brute_pairwise_f1(pred, truth):
    p, t = pair_sets(pred), pair_sets(truth)
    if not p and not t:
        return 1.0
    if not p or not t:
        return 0.0
    tp = len(p & t)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(p), tp / len(t)
    return 2 * prec * rec / (prec + rec)


# ---------------------------------------------------------------- transitive closure


def closure_partition(groups, universe):
    """Repeated-pass merge of overlapping sets until nothing changes."""
    sets = [set(g) for g in groups if g]
    covered = set().union(*sets) if sets else set()
    sets += [{u} for u in universe if u not in covered]
    changed = True
    while changed:
        changed = False
        out = []
        for s in sets:
            for o in out:
                if o & s:
                    o |= s
                    changed = True
                    break
            else:
                out.append(set(s))
        sets = out
    return {frozenset(s) for s in sets}


# ---------------------------------------------------------------- misc


def kdist_chord_elbow(ys):
    """Brute-force chord elbow on an already-sorted curve (vertical deviation)."""
    n = len(ys)
    if n == 1 or ys[0] == ys[-1] and all(y == ys[0] for y in ys):
        return ys[0]
    best, best_j = -1.0, 0
    for j, y in enumerate(ys):
        x0, y0, x1, y1 = 0, ys[0], n - 1, ys[-1]
        num = abs((y1 - y0) * j - (x1 - x0) * y + x1 * y0 - y1 * x0)
        d = num / math.hypot(y1 - y0, x1 - x0)
        if d > best + 1e-15:
            best, best_j = d, j
    return ys[best_j]


def ari_from_definition(a, b):
    """ARI by explicit pair enumeration (NOISE as singletons)."""
    def relabel(x):
        out, k = [], 0
        for v in x:
            if v == NOISE:
                out.append(("noise", k))
                k += 1
            else:
                out.append(v)
        return out

    a, b = relabel(a), relabel(b)
    n = len(a)
    cont = defaultdict(int)
    for x, y in zip(a, b):
        cont[(x, y)] += 1
    ra, rb = defaultdict(int), defaultdict(int)
    for (x, y), c in cont.items():
        ra[x] += c
        rb[y] += c
    c2 = lambda m: m * (m - 1) / 2
    idx = sum(c2(c) for c in cont.values())
    sa = sum(c2(c) for c in ra.values())
    sb = sum(c2(c) for c in rb.values())
    expected = sa * sb / c2(n)
    maxi = (sa + sb) / 2
    if maxi == expected:
        return 1.0
    return (idx - expected) / (maxi - expected)
