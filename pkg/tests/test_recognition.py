import numpy as np
import pytest

from aegis.imaging import BoundingBox, Image, PlacementSpec, SceneSpec, compose_scene, resample
from aegis.harness import single_face_scene
from aegis.prng import XorShift64Star, derive_seed
from aegis.recognition import (
    DetectionParams,
    FaceMatch,
    RecognitionError,
    detect_faces,
    embed,
    search_collection,
    select_primary_face,
    similarity,
)
from aegis.storage import FaceRecord

from .conftest import CORPUS_SEED
from .oracles import iou_oracle, score_oracle, search_oracle


def random_crop(seed, size=32, lo=64, hi=192):
    rng = XorShift64Star(seed)
    return Image.from_pixels(size, size, rng.int_block(size * size, lo, hi))


def random_unit_embedding(rng):
    v = np.array(rng.standard_normal(256))
    v -= v.mean()
    return v / np.linalg.norm(v)


def record(face_id, embedding):
    return FaceRecord(
        face_id=face_id,
        user_id="u",
        object_key="k.pgm",
        embedding=embedding,
        enrolled_at="2026-01-01T00:00:00+00:00",
    )


# -- embed -------------------------------------------------------------------

def test_embed_constant_crop_is_zero_vector():
    e = embed(Image.from_pixels(20, 20, [128] * 400))
    assert e.shape == (256,)
    assert not e.any()


def test_embed_invariants_zero_mean_unit_norm():
    for seed in range(20):
        e = embed(random_crop(seed))
        assert abs(e.sum()) <= 1e-6 * 256
        assert abs(np.linalg.norm(e) - 1.0) <= 1e-6


def test_embed_self_similarity_100():
    e = embed(random_crop(3, size=32))
    assert similarity(e, e) == pytest.approx(100.0, abs=1e-9)


def test_embed_affine_intensity_invariance():
    # pixel values are multiples of 4, so a*p + b stays integral in [0, 255]
    for seed in range(20):
        rng = XorShift64Star(seed)
        values = [64 + 4 * v for v in rng.int_block(24 * 24, 0, 24)]
        crop = Image.from_pixels(24, 24, values)
        arr = crop.array.astype(np.float64)
        for a, b in ((0.5, 20), (1.25, 0), (0.25, 100)):
            scaled = Image((arr * a + b).astype(np.uint8))
            assert similarity(embed(crop), embed(scaled)) >= 100.0 - 1e-6


def test_embed_scale_idempotence():
    crop = random_crop(12, size=48)
    e_direct = embed(crop)
    e_pre = embed(resample(crop, 16, 16))
    assert similarity(e_direct, e_pre) >= 99.0


# -- similarity --------------------------------------------------------------

def test_similarity_symmetric_bounded():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = random_unit_embedding(rng), random_unit_embedding(rng)
        s_ab, s_ba = similarity(a, b), similarity(b, a)
        assert s_ab == s_ba
        assert 0.0 <= s_ab <= 100.0
        assert s_ab == pytest.approx(score_oracle(a, b), abs=1e-9)


def test_similarity_orthogonal_and_negative_clamp():
    a = np.zeros(256)
    b = np.zeros(256)
    a[0], a[1] = 2 ** -0.5, 2 ** -0.5
    b[2], b[3] = 2 ** -0.5, 2 ** -0.5
    assert similarity(a, b) == 0.0
    assert similarity(a, -a) == 0.0


def test_similarity_rejects_wrong_length():
    with pytest.raises(RecognitionError):
        similarity(np.zeros(10), np.zeros(10))


def test_zero_embedding_scores_zero_against_everything():
    rng = np.random.default_rng(2)
    z = np.zeros(256)
    for _ in range(10):
        assert similarity(z, random_unit_embedding(rng)) == 0.0


# -- search ------------------------------------------------------------------

def test_search_empty_collection():
    rng = np.random.default_rng(3)
    assert search_collection(random_unit_embedding(rng), [], 80.0) is None


def test_search_exact_match():
    rng = np.random.default_rng(4)
    e = random_unit_embedding(rng)
    match = search_collection(e, [record("aaaa" * 4, e)], 80.0)
    assert match.face_id == "aaaa" * 4
    assert match.similarity == pytest.approx(100.0, abs=1e-9)


def test_search_threshold_respected():
    rng = np.random.default_rng(5)
    probe = random_unit_embedding(rng)
    others = [record(f"{i:016x}", random_unit_embedding(rng)) for i in range(5)]
    match = search_collection(probe, others, 80.0)
    assert match is None  # random strangers never reach 80


def test_search_tie_breaks_to_smaller_face_id():
    rng = np.random.default_rng(6)
    e = random_unit_embedding(rng)
    collection = [record("b" * 16, e), record("a" * 16, e)]
    match = search_collection(e, collection, 50.0)
    assert match.face_id == "a" * 16


def test_search_matches_exhaustive_oracle():
    rng = np.random.default_rng(7)
    for trial in range(100):
        probe = random_unit_embedding(rng)
        n = int(rng.integers(0, 11))
        collection = [
            record(f"{int(rng.integers(0, 2**32)):016x}", random_unit_embedding(rng))
            for _ in range(n)
        ]
        threshold = float(rng.uniform(0, 40))
        expected = search_oracle(probe, collection, threshold)
        actual = search_collection(probe, collection, threshold)
        if expected is None:
            assert actual is None
        else:
            assert (actual.face_id, pytest.approx(actual.similarity, abs=1e-9)) == expected


def test_search_removing_loser_keeps_winner():
    rng = np.random.default_rng(8)
    probe = random_unit_embedding(rng)
    collection = [record(f"{i:016x}", random_unit_embedding(rng)) for i in range(6)]
    winner = search_collection(probe, collection, 0.0)
    trimmed = [r for r in collection if r.face_id != winner.face_id][:-1]
    trimmed.append(next(r for r in collection if r.face_id == winner.face_id))
    again = search_collection(probe, trimmed, 0.0)
    assert again.face_id == winner.face_id
    assert again.similarity == winner.similarity


# -- primary selection -------------------------------------------------------

def test_primary_prefers_largest_area():
    boxes = [BoundingBox(0, 0, 48, 48), BoundingBox(80, 8, 24, 24)]
    assert select_primary_face(boxes) == boxes[0]


def test_primary_single_and_empty():
    box = BoundingBox(4, 4, 16, 16)
    assert select_primary_face([box]) == box
    assert select_primary_face([]) is None


def test_primary_tie_breaks_by_position():
    a = BoundingBox(10, 20, 24, 24)
    b = BoundingBox(10, 4, 24, 24)
    assert select_primary_face([a, b]) == b


# -- detection ---------------------------------------------------------------

def corpus_identity(index=0):
    # the same derivation path the harness admission stream uses
    return derive_seed(CORPUS_SEED, 1000 + index)


def test_detect_uniform_frame_empty():
    frame = Image.from_pixels(96, 96, [128] * 96 * 96)
    assert detect_faces(frame, DetectionParams()) == []


def test_detect_single_face_spec_staging():
    # the {10,10,32,32} example: off the tile grid, still one good box
    spec = SceneSpec(
        width=96, height=96, seed=5, background_level=128,
        background_noise_sigma=2.0,
        placements=(PlacementSpec(identity_seed=corpus_identity(), x=10, y=10, size=32),),
    )
    frame, truth = compose_scene(spec)
    boxes = detect_faces(frame, DetectionParams())
    assert len(boxes) == 1
    assert iou_oracle(boxes[0], truth[0][1]) >= 0.5


def test_detect_dark_scene_empty():
    spec = single_face_scene(corpus_identity(), 77, illumination=0.02)
    frame, _ = compose_scene(spec)
    assert detect_faces(frame, DetectionParams()) == []


def test_detect_translation_equivariance():
    seed = corpus_identity()
    base = single_face_scene(seed, scene_seed=31, pos=24)
    moved = single_face_scene(seed, scene_seed=31, pos=32)
    b1 = detect_faces(compose_scene(base)[0], DetectionParams())
    b2 = detect_faces(compose_scene(moved)[0], DetectionParams())
    assert len(b1) == len(b2) == 1
    assert (b2[0].x - b1[0].x, b2[0].y - b1[0].y) == (8, 8)
    assert (b2[0].w, b2[0].h) == (b1[0].w, b1[0].h)


def test_detect_two_faces_no_pair_over_nms_iou():
    spec = SceneSpec(
        width=160, height=96, seed=9, background_level=128,
        background_noise_sigma=2.0,
        placements=(
            PlacementSpec(identity_seed=corpus_identity(0), x=16, y=24, size=48),
            PlacementSpec(identity_seed=corpus_identity(1), x=120, y=36, size=24),
        ),
    )
    frame, truth = compose_scene(spec)
    params = DetectionParams()
    boxes = detect_faces(frame, params)
    assert len(boxes) == 2
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            assert boxes[i].iou(boxes[j]) <= params.nms_iou
    # sorted by descending area
    assert boxes[0].area >= boxes[1].area
    assert iou_oracle(boxes[0], truth[0][1]) >= 0.5
    assert iou_oracle(boxes[1], truth[1][1]) >= 0.5


def test_detect_frame_smaller_than_windows():
    frame = Image.from_pixels(8, 8, [0] * 64)
    with pytest.raises(RecognitionError):
        detect_faces(frame, DetectionParams())


def test_detection_params_validation():
    bad = [
        DetectionParams(stride=0),
        DetectionParams(variance_threshold=0),
        DetectionParams(nms_iou=1.5),
        DetectionParams(window_sizes=()),
    ]
    for params in bad:
        with pytest.raises(RecognitionError):
            params.validate()


def test_face_match_fields():
    m = FaceMatch(face_id="a" * 16, similarity=91.5)
    assert 0.0 <= m.similarity <= 100.0
