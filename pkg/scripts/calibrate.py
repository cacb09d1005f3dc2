"""Calibration sweep: verifies the numeric design before constants freeze.

Checks, over many deterministic identities:
  1. detection geometry: exact single box at every size, bright and dim;
     zero boxes dark; window-score margins vs the variance gate
  2. scenario similarities: self, dim, yaw45, sunglasses, spoof, cross-identity
  3. liveness separation live vs spoof
Run:  python scripts/calibrate.py
"""

from __future__ import annotations

import numpy as np

from aegis.imaging import (
    PlacementSpec,
    SceneSpec,
    compose_scene,
)
from aegis.liveness import laplacian_energy
from aegis.prng import derive_seed
from aegis.recognition import (
    DetectionParams,
    detect_faces,
    embed,
    similarity,
    _window_score,
)

MASTER = 20250810
PARAMS = DetectionParams()


def scene_for(identity_seed, size, illumination=1.0, yaw=0, accessory="none",
              spoof=False, frame=96, pos=24, scene_seed=7):
    bg = int(np.floor(128 * illumination + 0.5))
    return SceneSpec(
        width=frame, height=frame, seed=scene_seed,
        background_level=bg, background_noise_sigma=2.0,
        placements=(PlacementSpec(
            identity_seed=identity_seed, x=pos, y=pos, size=size,
            illumination=illumination, yaw_degrees=yaw, accessory=accessory,
            spoof=spoof),),
    )


def detect_one(spec):
    frame, truth = compose_scene(spec)
    boxes = detect_faces(frame, PARAMS)
    return frame, truth[0][1], boxes


def crop_emb(spec):
    frame, gt, boxes = detect_one(spec)
    assert len(boxes) >= 1, f"no detection for {spec}"
    b = boxes[0]
    return frame.crop(b.x, b.y, b.w, b.h), b, gt


def main():
    ident_seeds = [derive_seed(MASTER, 100 + i) for i in range(12)]

    print("== 1. detection geometry (bright + dim exact box, dark zero) ==")
    geo_fail = 0
    score_stats = {"bright": [], "dim": []}
    for i, seed in enumerate(ident_seeds):
        for size in (16, 24, 32, 48, 64):
            frame_sz = max(96, size + 48)
            s_b = scene_for(seed, size, 1.0, frame=frame_sz, scene_seed=50 + i)
            s_d = scene_for(seed, size, 0.4, frame=frame_sz, scene_seed=50 + i)
            s_k = scene_for(seed, size, 0.02, frame=frame_sz, scene_seed=50 + i)
            fb, gtb, bb = detect_one(s_b)
            fd, gtd, bd = detect_one(s_d)
            fk, gtk, bk = detect_one(s_k)
            ok = (len(bb) == 1 and len(bd) == 1 and len(bk) == 0
                  and bb[0] == gtb and bd[0] == gtd)
            if not ok:
                geo_fail += 1
                print(f"  FAIL seed#{i} size={size}: bright={bb} dim={bd} dark={len(bk)} truth={gtb}")
            else:
                score_stats["bright"].append(_window_score(fb, bb[0]))
                score_stats["dim"].append(_window_score(fd, bd[0]))
    for k, v in score_stats.items():
        if v:
            print(f"  window-score {k}: min={min(v):.1f} mean={np.mean(v):.1f} max={max(v):.1f}  (gate={PARAMS.variance_threshold})")
    print(f"  geometry failures: {geo_fail}")

    print("== 2. similarities (size 48, canonical staging) ==")
    sims = {"self": [], "dim": [], "yaw45": [], "yaw90": [], "sun": [], "spoof": []}
    for i, seed in enumerate(ident_seeds):
        c0, b0, _ = crop_emb(scene_for(seed, 48, scene_seed=60 + i))
        g = embed(c0)
        for key, kwargs in [
            ("self", {}),
            ("dim", dict(illumination=0.4)),
            ("yaw45", dict(yaw=45)),
            ("yaw90", dict(yaw=90)),
            ("sun", dict(accessory="sunglasses")),
            ("spoof", dict(spoof=True)),
        ]:
            c, b, _ = crop_emb(scene_for(seed, 48, scene_seed=60 + i, **kwargs))
            sims[key].append(similarity(g, embed(c)))
    for k, v in sims.items():
        print(f"  {k:6s}: min={min(v):6.2f} mean={np.mean(v):6.2f} max={max(v):6.2f}")

    print("== 3. cross-identity scores ==")
    embs = []
    for i, seed in enumerate(ident_seeds):
        c, _, _ = crop_emb(scene_for(seed, 48, scene_seed=60 + i))
        embs.append(embed(c))
    cross = [similarity(embs[i], embs[j]) for i in range(len(embs)) for j in range(i + 1, len(embs))]
    print(f"  cross: min={min(cross):.2f} mean={np.mean(cross):.2f} max={max(cross):.2f}  (need < 40, ideally < 35)")

    print("== 4. scale consistency (32 vs 64 renders; target >= 0.9) ==")
    from aegis.imaging import generate_identity_texture
    cons = []
    for seed in ident_seeds + [1]:
        e32 = embed(generate_identity_texture(seed, 32))
        e64 = embed(generate_identity_texture(seed, 64))
        cons.append(similarity(e32, e64))
    print(f"  min={min(cons):.2f} mean={np.mean(cons):.2f}")
    e1 = embed(generate_identity_texture(1, 32))
    e2 = embed(generate_identity_texture(2, 32))
    print(f"  seeds 1 vs 2 at 32: {similarity(e1, e2):.2f} (need in [0, 30))")

    print("== 5. liveness separation (size 48) ==")
    lives, spoofs = [], []
    for i, seed in enumerate(ident_seeds):
        cl, _, _ = crop_emb(scene_for(seed, 48, scene_seed=60 + i))
        cs, _, _ = crop_emb(scene_for(seed, 48, spoof=True, scene_seed=60 + i))
        lives.append(laplacian_energy(cl))
        spoofs.append(laplacian_energy(cs))
    print(f"  live : min={min(lives):.2f} mean={np.mean(lives):.2f}")
    print(f"  spoof: max={max(spoofs):.2f} mean={np.mean(spoofs):.2f}")
    print(f"  midpoint threshold = {(min(lives) + max(spoofs)) / 2:.2f}")


if __name__ == "__main__":
    main()
