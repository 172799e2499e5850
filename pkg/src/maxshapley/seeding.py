import hashlib


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
