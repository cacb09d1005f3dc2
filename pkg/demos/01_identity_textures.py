"""Synthetic identities and capture conditions, rendered to PGM files.

Every face in this system is a procedural texture derived from a 64-bit
seed: the same seed always renders the same face, at any size, and two
different seeds look nothing alike to the matcher. This script renders one
identity under each capture condition the evaluation exercises and writes
the tiles to ./demo-out/ so you can open them in any PGM viewer.
"""

from pathlib import Path

from aegis import (
    apply_accessory,
    apply_illumination,
    apply_spoof,
    apply_yaw,
    encode_pgm,
    generate_identity_texture,
)

OUT = Path("demo-out")
OUT.mkdir(exist_ok=True)

seed = 2026_08_10
face = generate_identity_texture(seed, 48)

variants = {
    "frontal": face,
    "dim": apply_illumination(face, 0.4),
    "dark": apply_illumination(face, 0.02),
    "yaw45": apply_yaw(face, 45, bg_seed=7),
    "yaw90": apply_yaw(face, 90, bg_seed=7),
    "sunglasses": apply_accessory(face, "sunglasses"),
    "spoofed": apply_spoof(face),
}

for name, tile in variants.items():
    path = OUT / f"identity_{name}.pgm"
    path.write_bytes(encode_pgm(tile))
    values = tile.array
    print(
        f"{name:>10}: mean {values.mean():6.1f}  std {values.std():5.1f}  -> {path}"
    )

# The same identity at two sizes is still the same identity.
small = generate_identity_texture(seed, 24)
large = generate_identity_texture(seed, 64)
(OUT / "identity_24px.pgm").write_bytes(encode_pgm(small))
(OUT / "identity_64px.pgm").write_bytes(encode_pgm(large))
print("\nwrote 24px and 64px renders of the same identity; compare them by eye")
