"""aegis: a self-contained facial-recognition entry system.

Subpackages mirror the deployment roles: imaging (synthetic camera),
recognition (face matching engine), liveness (spoof detection), storage
(object/credential stores and audit log), gateway (HTTP decision service),
edge (door-side client), and harness (scenario evaluation).
"""

from .imaging import (
    BoundingBox,
    Image,
    PlacementSpec,
    SceneSpec,
    apply_accessory,
    apply_illumination,
    apply_spoof,
    apply_yaw,
    compose_scene,
    decode_pgm,
    encode_pgm,
    generate_identity_texture,
    resample,
)
from .liveness import LivenessVerdict, assess_liveness, laplacian_energy
from .recognition import (
    DetectionParams,
    FaceMatch,
    detect_faces,
    embed,
    search_collection,
    select_primary_face,
    similarity,
)

__all__ = [
    "BoundingBox",
    "Image",
    "PlacementSpec",
    "SceneSpec",
    "apply_accessory",
    "apply_illumination",
    "apply_spoof",
    "apply_yaw",
    "compose_scene",
    "decode_pgm",
    "encode_pgm",
    "generate_identity_texture",
    "resample",
    "LivenessVerdict",
    "assess_liveness",
    "laplacian_energy",
    "DetectionParams",
    "FaceMatch",
    "detect_faces",
    "embed",
    "search_collection",
    "select_primary_face",
    "similarity",
]

__version__ = "0.1.0"
