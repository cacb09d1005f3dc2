"""Face detection and similarity scoring on composed frames.

A frame is a noisy gray background with face tiles blitted in. The detector
finds textured regions and snaps them to the supported window ladder; each
crop becomes a 256-value embedding scored 0-100 against a gallery. Watch how
the score responds to lighting, rotation, accessories, and blur.
"""

from aegis import (
    PlacementSpec,
    SceneSpec,
    compose_scene,
    detect_faces,
    embed,
    select_primary_face,
    similarity,
)

IDENTITY = 424242


def frame_for(**kwargs):
    placement = PlacementSpec(identity_seed=IDENTITY, x=24, y=24, size=48, **kwargs)
    background = int(round(128 * kwargs.get("illumination", 1.0)))
    spec = SceneSpec(
        width=96, height=96, seed=5, background_level=background,
        background_noise_sigma=2.0, placements=(placement,),
    )
    return compose_scene(spec)[0]


def primary_crop(frame):
    boxes = detect_faces(frame)
    if not boxes:
        return None, None
    box = select_primary_face(boxes)
    return frame.crop(box.x, box.y, box.w, box.h), box


enrolled_frame = frame_for()
crop, box = primary_crop(enrolled_frame)
print(f"enrollment: detected {box.w}x{box.h} face at ({box.x},{box.y})")
gallery = embed(crop)

conditions = {
    "same capture": {},
    "dim light": {"illumination": 0.4},
    "turned 45 deg": {"yaw_degrees": 45},
    "turned 90 deg": {"yaw_degrees": 90},
    "sunglasses": {"accessory": "sunglasses"},
    "replayed photo": {"spoof": True},
}

print(f"{'condition':<16} {'detected':<9} {'similarity':>10}   decision at threshold 80")
for name, kwargs in conditions.items():
    crop, box = primary_crop(frame_for(**kwargs))
    if crop is None:
        print(f"{name:<16} {'no':<9} {'-':>10}   DENY (no face found)")
        continue
    score = similarity(gallery, embed(crop))
    verdict = "GRANT" if score >= 80 else "DENY"
    print(f"{name:<16} {'yes':<9} {score:>10.2f}   {verdict}")

dark = frame_for(illumination=0.02)
print(f"\ncomplete darkness: detections = {detect_faces(dark)} (variance collapses)")
