"""Reference implementations the package is checked against."""

from functools import reduce

# FNV-1a/64 written from the published parameters, sharing no code with the package
FNV_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    return reduce(lambda h, b: ((h ^ b) * FNV_PRIME) % 2**64, data, FNV_BASIS)


def brute_force_hrw(key: str, hosts) -> str:
    scored = [(fnv1a64((key + h).encode()), h) for h in hosts]
    top = max(s for s, _ in scored)
    return min(h for s, h in scored if s == top)
