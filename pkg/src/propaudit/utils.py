"""Small shared helpers: seed derivation and file digests."""

import hashlib


def derive_seed(seed: int, *parts) -> int:
    """Derive a stable per-component seed from a root seed and string-able tags.

    Uses SHA-256 so results are identical across processes and Python versions
    (unlike the builtin ``hash``).
    """
    payload = repr(int(seed)) + "|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
