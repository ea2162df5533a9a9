import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swapkit import geometry
from swapkit.errors import (
    DegenerateConfiguration,
    MissingEyeLandmarks,
    MissingOutlineLandmarks,
    SingularTransform,
)
from swapkit.geometry import (
    AffineTransform,
    Landmarks,
    apply_transform,
    canonical_template,
    compose,
    estimate_alignment,
    eye_regions,
    face_width,
    invert,
    warp,
)


def umeyama_similarity(src, dst):
    """Closed-form least-squares similarity (SVD formulation), used as oracle."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    cov = dc.T @ sc / len(src)
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[1, 1] = -1.0
    rot = u @ s @ vt
    var_s = (sc**2).sum() / len(src)
    scale = np.trace(np.diag(d) @ s) / var_s
    t = mu_d - scale * rot @ mu_s
    return np.hstack([scale * rot, t[:, None]])


def outline_landmarks(points):
    pts = np.asarray(points, dtype=float)
    return Landmarks(pts, {"face_outline": tuple(range(len(pts)))})


class TestEstimateAlignment:
    def test_identity_on_template(self):
        tpl = canonical_template(256)
        t = estimate_alignment(tpl, tpl)
        np.testing.assert_allclose(t.matrix, [[1, 0, 0], [0, 1, 0]], atol=1e-9)

    def test_pure_translation(self):
        tpl = canonical_template(256)
        shifted = Landmarks(tpl.points + [5.0, 3.0], dict(tpl.index_groups))
        t = estimate_alignment(shifted, tpl)
        np.testing.assert_allclose(t.linear, np.eye(2), atol=1e-9)
        np.testing.assert_allclose(t.translation, [-5.0, -3.0], atol=1e-9)

    def test_matches_umeyama_oracle_on_known_similarity(self):
        rng = np.random.default_rng(7)
        src = rng.uniform(0, 100, size=(4, 2))
        theta = 0.31
        scale = 1.7
        rot = scale * np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        dst = src @ rot.T + np.array([12.0, -4.0])
        t = estimate_alignment(Landmarks(src), Landmarks(dst))
        expected = np.hstack([rot, np.array([[12.0], [-4.0]])])
        np.testing.assert_allclose(t.matrix, expected, atol=1e-6)
        oracle = umeyama_similarity(src, dst)
        np.testing.assert_allclose(t.matrix, oracle, atol=1e-6)

    def test_matches_umeyama_oracle_with_noise(self):
        rng = np.random.default_rng(21)
        src = rng.uniform(0, 64, size=(6, 2))
        dst = rng.uniform(0, 64, size=(6, 2))
        t = estimate_alignment(Landmarks(src), Landmarks(dst))
        np.testing.assert_allclose(t.matrix, umeyama_similarity(src, dst), atol=1e-8)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(3)
        src = rng.uniform(0, 64, size=(5, 2))
        dst = rng.uniform(0, 64, size=(5, 2))
        v = np.array([9.5, -2.25])
        base = estimate_alignment(Landmarks(src), Landmarks(dst))
        moved = estimate_alignment(Landmarks(src + v), Landmarks(dst))
        np.testing.assert_allclose(moved.linear, base.linear, atol=1e-8)
        np.testing.assert_allclose(
            apply_transform(moved, src + v), apply_transform(base, src), atol=1e-8
        )

    def test_collinear_points_rejected(self):
        src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(DegenerateConfiguration):
            estimate_alignment(Landmarks(src), Landmarks(src))

    def test_coincident_points_rejected(self):
        src = np.ones((4, 2))
        with pytest.raises(DegenerateConfiguration):
            estimate_alignment(Landmarks(src), Landmarks(src))


class TestWarp:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(-1, 1, size=(16, 12, 3))
        out = warp(img, AffineTransform.identity(), (16, 12))
        assert np.array_equal(out, img)

    def test_integer_translation_moves_delta(self):
        img = np.zeros((8, 8))
        img[4, 3] = 1.0
        t = AffineTransform(np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]]))
        out = warp(img, t, (8, 8))
        expected = np.zeros((8, 8))
        expected[4, 5] = 1.0
        assert np.array_equal(out, expected)

    def test_half_pixel_shift_uses_bilinear_weights(self):
        # Step edge: columns 0..3 are 0, columns 4..7 are 1.  Shifting the
        # image +0.5 px in x samples every output pixel half way between two
        # inputs, so the edge column becomes exactly 0.5 (hand-computed
        # 0.5/0.5 weights).
        img = np.zeros((4, 8))
        img[:, 4:] = 1.0
        t = AffineTransform(np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]]))
        out = warp(img, t, (4, 8))
        assert np.array_equal(out[:, 4], np.full(4, 0.5))
        assert np.array_equal(out[:, 5:], np.ones((4, 3)))
        assert np.array_equal(out[:, 1:4], np.zeros((4, 3)))

    def test_out_of_bounds_samples_are_zero(self):
        img = np.ones((4, 4))
        t = AffineTransform(np.array([[1.0, 0.0, 10.0], [0.0, 1.0, 0.0]]))
        out = warp(img, t, (4, 4))
        assert np.array_equal(out, np.zeros((4, 4)))

    def test_round_trip_on_supported_pixels(self):
        h = w = 48
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        img = 0.2 + 0.5 * xs / w + 0.3 * ys / h + 0.05 * np.sin(2 * np.pi * xs / 64)
        theta = np.deg2rad(5.0)
        lin = 1.1 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        t = AffineTransform(np.hstack([lin, np.array([[3.0], [1.0]])]))
        fwd = warp(img, t, (h, w))
        back = warp(fwd, invert(t), (h, w))
        support = warp(np.ones((h, w)), t, (h, w))
        support_back = warp(support, invert(t), (h, w))
        ok = support_back > 1.0 - 1e-12
        assert ok.sum() > 100
        np.testing.assert_allclose(back[ok], img[ok], atol=1e-3)


class TestInvert:
    def test_identity(self):
        t = invert(AffineTransform.identity())
        np.testing.assert_array_equal(t.matrix, AffineTransform.identity().matrix)

    def test_translation(self):
        t = AffineTransform(np.array([[1.0, 0.0, 7.0], [0.0, 1.0, -2.0]]))
        np.testing.assert_allclose(invert(t).translation, [-7.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(invert(t).linear, np.eye(2), atol=1e-12)

    def test_random_inverse_composes_to_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            lin = rng.uniform(-2, 2, size=(2, 2))
            if abs(np.linalg.det(lin)) < 0.1:
                continue
            t = AffineTransform(np.hstack([lin, rng.uniform(-5, 5, size=(2, 1))]))
            ident = compose(invert(t), t)
            np.testing.assert_allclose(ident.matrix, [[1, 0, 0], [0, 1, 0]], atol=1e-9)

    def test_singular_rejected(self):
        t = AffineTransform(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]))
        with pytest.raises(SingularTransform):
            invert(t)


class TestEyeRegions:
    def eyes(self, left, right):
        pts = np.asarray(list(left) + list(right), dtype=float)
        groups = {
            "left_eye": tuple(range(len(left))),
            "right_eye": tuple(range(len(left), len(left) + len(right))),
        }
        return Landmarks(pts, groups)

    def test_point_plus_margin(self):
        lm = self.eyes([(10, 10)], [(30, 10)])
        left, right = eye_regions(lm, 4, (64, 64))
        assert left.box == (6, 6, 14, 14)
        assert right.box == (26, 6, 34, 14)
        assert (left.side, right.side) == ("left", "right")

    def test_bounding_box_zero_margin(self):
        lm = self.eyes([(10, 10), (20, 12)], [(40, 10), (50, 13)])
        left, _ = eye_regions(lm, 0, (64, 64))
        assert left.box == (10, 10, 20, 12)

    def test_clamped_to_image(self):
        lm = self.eyes([(10, 10)], [(30, 10)])
        left, right = eye_regions(lm, 1000, (64, 48))
        assert left.box == (0, 0, 48, 64)
        assert right.box == (0, 0, 48, 64)

    def test_missing_eye_group(self):
        lm = outline_landmarks([(0, 0), (1, 1), (2, 0)])
        with pytest.raises(MissingEyeLandmarks):
            eye_regions(lm, 2, (16, 16))

    @given(
        cx=st.floats(4, 27),
        cy=st.floats(4, 27),
        margin=st.floats(0.5, 100),
    )
    @settings(max_examples=50, deadline=None)
    def test_boxes_never_exceed_bounds(self, cx, cy, margin):
        lm = self.eyes([(cx, cy)], [(cx + 2, cy)])
        for region in eye_regions(lm, margin, (32, 32)):
            x0, y0, x1, y1 = region.box
            assert 0 <= x0 < x1 <= 32
            assert 0 <= y0 < y1 <= 32


class TestFaceWidth:
    def test_horizontal_extent(self):
        assert face_width(outline_landmarks([(0, 5), (10, 5)])) == 10

    def test_vertical_line_has_zero_width(self):
        assert face_width(outline_landmarks([(3, 0), (3, 9)])) == 0

    def test_scaling_oracle(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 100, size=(7, 2))
        centroid = pts.mean(axis=0)
        scaled = centroid + 1.3 * (pts - centroid)
        ratio = face_width(outline_landmarks(scaled)) / face_width(outline_landmarks(pts))
        assert abs(ratio - 1.3) < 1e-9

    @given(scale=st.floats(0.01, 100))
    @settings(max_examples=50, deadline=None)
    def test_width_scales_linearly(self, scale):
        pts = np.array([[1.0, 2.0], [11.0, 7.0], [5.0, 20.0]])
        base = face_width(outline_landmarks(pts))
        assert face_width(outline_landmarks(pts * scale)) == pytest.approx(
            scale * base, rel=1e-12
        )

    def test_missing_outline(self):
        lm = Landmarks(np.array([[1.0, 1.0]]), {"left_eye": (0,)})
        with pytest.raises(MissingOutlineLandmarks):
            face_width(lm)


class TestLandmarksType:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Landmarks(np.array([[np.nan, 0.0], [1.0, 1.0]]))

    def test_rejects_overlapping_groups(self):
        with pytest.raises(ValueError):
            Landmarks(np.zeros((3, 2)), {"left_eye": (0,), "right_eye": (0,)})

    def test_rejects_out_of_range_index(self):
        with pytest.raises(IndexError):
            Landmarks(np.zeros((2, 2)), {"left_eye": (5,)})


class TestLandmarkSerialization:
    def test_round_trip(self, tmp_path):
        groups = {"left_eye": (0,), "right_eye": (1,), "face_outline": (2, 3)}
        frames = {
            0: Landmarks(np.array([[1.5, 2.0], [3.0, 2.0], [0.0, 5.0], [4.0, 5.0]]), groups),
            2: Landmarks(np.array([[1.0, 2.5], [3.5, 2.5], [0.5, 5.5], [4.5, 5.5]]), groups),
        }
        path = tmp_path / "landmarks.csv"
        geometry.save_landmarks(path, frames)
        loaded = geometry.load_landmarks(path, groups)
        assert set(loaded) == {0, 2}
        for k in frames:
            np.testing.assert_array_equal(loaded[k].points, frames[k].points)
            assert loaded[k].index_groups == groups
