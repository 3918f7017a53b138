#!/usr/bin/env python3
"""Reference implementation of the mock backend's image rules.

Written from docs/mock-backend.md without looking at the Rust code. Prints
the hashes frozen in crates/posegen/tests/gateway.rs.

    python3 scripts/mock_oracle.py
"""
import hashlib
import math
import struct

MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, state):
        self.state = state & MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def le64(b):
    return struct.unpack("<Q", b[:8])[0]


def txt2img(prompt, seed, steps, width, height):
    h = hashlib.sha256(prompt.encode()).digest()
    rng = SplitMix64(seed ^ le64(h[8:16]) ^ (steps << 32))
    g = [rng.next() % 64 for _ in range(6)]
    out = bytearray()
    for y in range(height):
        for x in range(width):
            for k in range(3):
                out.append((h[k] + ((g[2 * k] * x + g[2 * k + 1] * y) >> 3)) & 255)
    return bytes(out)


def f32(v):
    return struct.unpack("<f", struct.pack("<f", v))[0]


def encode(rgb, width, height):
    lw, lh = width // 8, height // 8
    sums = [[0, 0, 0] for _ in range(lw * lh)]
    for y in range(height):
        for x in range(width):
            cell = (y // 8) * lw + x // 8
            i = 3 * (y * width + x)
            for c in range(3):
                sums[cell][c] += rgb[i + c]
    data = [0.0] * (4 * lw * lh)
    for i, s in enumerate(sums):
        for c in range(3):
            data[c * lw * lh + i] = f32(s[c] / 16320.0)
        data[3 * lw * lh + i] = f32(sum(s) / 48960.0)
    return data, (4, lh, lw)


def latent_checksum(data):
    return hashlib.sha256(b"".join(struct.pack("<f", v) for v in data)).hexdigest()


def depth2img(prompt, seed, steps, strength, depth, lw, lh):
    w, h = 8 * lw, 8 * lh
    bg = txt2img(prompt, seed, steps, w, h)
    k = math.floor(strength * 1000 + 0.5)
    out = bytearray(bg)
    for y in range(h):
        for x in range(w):
            c = depth[(y // 8) * lw + x // 8]
            if c > 0:
                g = min(255, max(0, math.floor(c * 255 + 0.5)))
                for ch in range(3):
                    i = 3 * (y * w + x) + ch
                    out[i] = (bg[i] * (1000 - k) + g * k + 500) // 1000
    return bytes(out)


def disk(size, radius, value):
    c = size / 2
    return [
        value if (x + 0.5 - c) ** 2 + (y + 0.5 - c) ** 2 <= radius * radius else 0.0
        for y in range(size)
        for x in range(size)
    ]


def sha(b):
    return hashlib.sha256(b).hexdigest()


if __name__ == "__main__":
    img = txt2img("a", 1, 50, 512, 512)
    print("txt2img a/1/50 512x512 rgb sha256:", sha(img))
    lat, shape = encode(img, 512, 512)
    print("encode shape:", shape, "checksum:", latent_checksum(lat))
    d = depth2img("a", 1, 50, 0.8, disk(64, 16, 0.75), 64, 64)
    print("depth2img disk r16 c0.75 strength 0.8 rgb sha256:", sha(d))
    small = txt2img("a photo of an athlete doing diving", 7, 50, 16, 8)
    print("txt2img diving/7/50 16x8 bytes[:12]:", list(small[:12]))
