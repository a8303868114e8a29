"""Tests for volume sampling, grids, phantom generation, and volume I/O."""

import struct
from itertools import product

import numpy as np
import pytest

from planeguide.geometry import (
    IDENTITY_QUAT,
    Pose,
    geodesic_loss,
    quat_from_axis_angle,
    random_unit_quaternions,
)
from planeguide.volume import (
    PlaneGrid,
    SliceImage,
    Volume,
    binarize,
    build_grid,
    generate_phantom,
    load_standard_planes,
    load_volume,
    sample_points,
    sample_slice,
    sample_slice_gradient,
    save_standard_planes,
    save_volume,
)


def identity_pose(delta=(0.0, 0.0, 0.0)):
    return Pose(q=IDENTITY_QUAT, delta=np.asarray(delta, dtype=float))


def random_volume(seed, dims=(16, 16, 16)):
    rng = np.random.default_rng(seed)
    return Volume(intensities=rng.uniform(0.0, 1.0, dims).astype(np.float32))


def identity_slab_oracle(arr, out_w, out_h):
    """Direct index-arithmetic interpolation of the central z-slab.

    Independent of the sampler: explicit loops and corner-weight products.
    """
    w, h, d = arr.shape
    fz = (d - 1) / 2.0
    z0 = min(int(np.floor(fz)), d - 2)
    tz = fz - z0
    out = np.zeros((out_h, out_w))
    for v in range(out_h):
        fy = v * (h - 1) / (out_h - 1)
        y0 = min(int(np.floor(fy)), h - 2)
        ty = fy - y0
        for u in range(out_w):
            fx = u * (w - 1) / (out_w - 1)
            x0 = min(int(np.floor(fx)), w - 2)
            tx = fx - x0
            acc = 0.0
            for dx, wx in ((0, 1.0 - tx), (1, tx)):
                for dy, wy in ((0, 1.0 - ty), (1, ty)):
                    for dz, wz in ((0, 1.0 - tz), (1, tz)):
                        acc += wx * wy * wz * float(arr[x0 + dx, y0 + dy, z0 + dz])
            out[v, u] = acc
    return out


class TestVolumeType:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Volume(intensities=np.full((4, 4, 4), 1.5))

    def test_rejects_nan(self):
        arr = np.zeros((4, 4, 4))
        arr[1, 1, 1] = np.nan
        with pytest.raises(ValueError):
            Volume(intensities=arr)

    def test_rejects_tiny_dims(self):
        with pytest.raises(ValueError):
            Volume(intensities=np.zeros((1, 4, 4)))

    def test_immutable(self):
        vol = random_volume(0)
        with pytest.raises(ValueError):
            vol.intensities[0, 0, 0] = 0.5

    def test_dims_order(self):
        vol = Volume(intensities=np.zeros((4, 5, 6)))
        assert vol.dims == (4, 5, 6)


class TestSliceImageType:
    def test_width_height(self):
        img = SliceImage(intensities=np.zeros((10, 20)))
        assert img.height == 10
        assert img.width == 20

    def test_mask_shape_mismatch(self):
        with pytest.raises(ValueError):
            SliceImage(intensities=np.zeros((4, 4)), mask=np.zeros((4, 5), dtype=bool))


class TestBuildGrid:
    def test_identity_center_pixel(self):
        grid = build_grid(identity_pose(), 5, 5)
        np.testing.assert_allclose(grid.coords[2, 2], [0.0, 0.0, 0.0], atol=1e-12)

    def test_identity_z_is_delta_z(self):
        grid = build_grid(identity_pose((0.1, -0.2, 0.3)), 7, 5)
        np.testing.assert_allclose(grid.coords[:, :, 2], 0.3, atol=1e-12)

    def test_quarter_turn_about_x_flattens_y(self):
        # local (x, y, 0) rotates to (x, 0, y): all world y-coords vanish
        pose = Pose(q=quat_from_axis_angle((1.0, 0.0, 0.0), np.pi / 2), delta=np.zeros(3))
        grid = build_grid(pose, 9, 9)
        np.testing.assert_allclose(grid.coords[:, :, 1], 0.0, atol=1e-12)

    def test_adjacent_pixel_spacing(self):
        rng = np.random.default_rng(3)
        for q in random_unit_quaternions(10, rng):
            pose = Pose(q=q, delta=rng.uniform(-0.3, 0.3, 3))
            grid = build_grid(pose, 11, 7, extent=0.8)
            step_u = np.linalg.norm(np.diff(grid.coords, axis=1), axis=-1)
            np.testing.assert_allclose(step_u, 2 * 0.8 / (11 - 1), atol=1e-9)

    def test_shape(self):
        grid = build_grid(identity_pose(), 6, 4)
        assert grid.shape == (4, 6)
        assert grid.coords.shape == (4, 6, 3)

    def test_rejects_bad_extent(self):
        with pytest.raises(ValueError):
            build_grid(identity_pose(), 5, 5, extent=0.0)

    def test_rejects_tiny_output(self):
        with pytest.raises(ValueError):
            build_grid(identity_pose(), 1, 5)


class TestSampleSlice:
    def test_identity_matches_direct_indexing_oracle(self):
        vol = random_volume(7, dims=(24, 20, 16))
        img = sample_slice(vol, identity_pose(), out_w=33, out_h=29)
        expected = identity_slab_oracle(np.asarray(vol.intensities, dtype=np.float64), 33, 29)
        assert np.max(np.abs(img.intensities - expected)) < 1e-6

    def test_fully_out_of_bounds_is_zero(self):
        vol = random_volume(1)
        img = sample_slice(vol, identity_pose((2.5, 0.0, 0.0)), out_w=8, out_h=8)
        assert np.all(img.intensities == 0.0)

    def test_boundary_face_touch(self):
        # at delta=(2,0,0) the leftmost column lands exactly on the x=+1 face:
        # on-boundary coordinates read the face, strictly outside reads 0
        vol = random_volume(1)
        img = sample_slice(vol, identity_pose((2.0, 0.0, 0.0)), out_w=8, out_h=8)
        assert np.all(img.intensities[:, 1:] == 0.0)

    def test_constant_volume(self):
        vol = Volume(intensities=np.full((8, 8, 8), 0.625, dtype=np.float32))
        img = sample_slice(vol, identity_pose(), out_w=9, out_h=9, extent=0.9)
        np.testing.assert_allclose(img.intensities, 0.625, atol=1e-7)

    def test_double_cover_sign_flip(self):
        vol = random_volume(5)
        rng = np.random.default_rng(8)
        q = random_unit_quaternions(1, rng)[0]
        pose_a = Pose(q=q, delta=np.array([0.05, -0.1, 0.02]))
        pose_b = Pose(q=-q, delta=pose_a.delta)
        img_a = sample_slice(vol, pose_a, out_w=16, out_h=16)
        img_b = sample_slice(vol, pose_b, out_w=16, out_h=16)
        np.testing.assert_array_equal(img_a.intensities, img_b.intensities)

    def test_linear_in_intensities(self):
        v1 = random_volume(10)
        v2 = random_volume(11)
        combo = Volume(intensities=0.3 * v1.intensities + 0.6 * v2.intensities)
        rng = np.random.default_rng(12)
        pose = Pose(q=random_unit_quaternions(1, rng)[0], delta=rng.uniform(-0.2, 0.2, 3))
        s_combo = sample_slice(combo, pose, 20, 20).intensities
        s1 = sample_slice(v1, pose, 20, 20).intensities
        s2 = sample_slice(v2, pose, 20, 20).intensities
        assert np.max(np.abs(s_combo - (0.3 * s1 + 0.6 * s2))) < 1e-6

    def test_carries_pose(self):
        vol = random_volume(2)
        pose = identity_pose((0.0, 0.0, 0.1))
        img = sample_slice(vol, pose, 8, 8)
        assert img.pose is pose


class TestSampleSliceGradient:
    def test_constant_volume_zero_gradient(self):
        vol = Volume(intensities=np.full((8, 8, 8), 0.5, dtype=np.float32))
        grad = sample_slice_gradient(vol, identity_pose(), 9, 9, extent=0.8)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_x_ramp(self):
        w = 16
        ramp = np.broadcast_to(np.linspace(0.0, 1.0, w)[:, None, None], (w, w, w))
        vol = Volume(intensities=np.ascontiguousarray(ramp, dtype=np.float32))
        # intensity = (x + 1) / 2 in normalized coords, so d/dx = 0.5
        grad = sample_slice_gradient(vol, identity_pose(), 9, 9, extent=0.7)
        np.testing.assert_allclose(grad[:, :, 0], 0.5, atol=1e-6)
        np.testing.assert_allclose(grad[:, :, 1:], 0.0, atol=1e-6)

    def test_matches_central_finite_differences(self):
        vol = random_volume(21, dims=(32, 28, 30))
        dims = np.array(vol.dims)
        rng = np.random.default_rng(22)
        # build points from cell index + interior fraction so the FD stencil
        # never straddles a cell face
        cells = np.stack([rng.integers(2, n - 3, 100) for n in dims], axis=-1)
        frac = rng.uniform(0.1, 0.9, (100, 3))
        pts = (cells + frac) / (dims - 1) * 2.0 - 1.0

        from planeguide.volume import sample_points_gradient

        analytic = sample_points_gradient(vol, pts)
        h = 1e-4
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = h
            fd = (sample_points(vol, pts + offset) - sample_points(vol, pts - offset)) / (2 * h)
            assert np.max(np.abs(analytic[:, axis] - fd)) < 1e-4

    def test_out_of_bounds_zero(self):
        vol = random_volume(3)
        from planeguide.volume import sample_points_gradient

        grad = sample_points_gradient(vol, np.array([[1.5, 0.0, 0.0]]))
        np.testing.assert_array_equal(grad, np.zeros((1, 3)))


class TestBinarize:
    def test_all_zero(self):
        mask = binarize(SliceImage(intensities=np.zeros((4, 4))), threshold=0.1)
        assert not mask.any()

    def test_all_one(self):
        mask = binarize(SliceImage(intensities=np.ones((4, 4))), threshold=0.5)
        assert mask.all()

    def test_checkerboard(self):
        board = np.indices((6, 6)).sum(axis=0) % 2
        mask = binarize(SliceImage(intensities=board.astype(float)), threshold=0.5)
        assert mask.sum() == 18

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            binarize(SliceImage(intensities=np.zeros((4, 4))), threshold=1.0)


def rotations24(arr):
    """The 24 axis-aligned cube orientations, keyed by operator not result."""
    n = arr.shape[0]
    canary = np.arange(n**3).reshape(n, n, n)
    ops = {}
    for kx, ky, kz in product(range(4), repeat=3):
        def apply(a, kx=kx, ky=ky, kz=kz):
            b = np.rot90(a, kx, (1, 2))
            b = np.rot90(b, ky, (0, 2))
            return np.rot90(b, kz, (0, 1))
        # several (kx, ky, kz) triples realize the same operator; keep the first
        ops.setdefault(apply(canary).tobytes(), (apply, (kx, ky, kz)))
    assert len(ops) == 24
    return [(fn(arr), ks) for fn, ks in ops.values()]


def plain_ncc(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float(np.sum(a * b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestGeneratePhantom:
    def test_deterministic(self):
        v1, _ = generate_phantom(7, dims=(32, 32, 32))
        v2, _ = generate_phantom(7, dims=(32, 32, 32))
        np.testing.assert_array_equal(v1.intensities, v2.intensities)

    def test_different_seeds_differ(self):
        v1, _ = generate_phantom(1, dims=(32, 32, 32))
        v2, _ = generate_phantom(2, dims=(32, 32, 32))
        assert not np.array_equal(v1.intensities, v2.intensities)

    def test_no_rotational_self_symmetry(self):
        vol, _ = generate_phantom(0, dims=(48, 48, 48))
        arr = np.asarray(vol.intensities, dtype=np.float64)
        nontrivial = 0
        for rotated, key in rotations24(arr):
            if key == (0, 0, 0):
                continue
            nontrivial += 1
            assert np.mean(np.abs(rotated - arr)) > 0.01, f"symmetric under {key}"
        assert nontrivial == 23

    def test_standard_planes_are_distinct_views(self):
        vol, sps = generate_phantom(4)
        assert [sp.sp_id for sp in sps] == ["tvp", "tcp"]
        imgs = [
            sample_slice(vol, Pose(q=sp.q_pos, delta=sp.delta_sp), 64, 64).intensities
            for sp in sps
        ]
        assert plain_ncc(imgs[0], imgs[1]) < 0.95

    def test_opposite_direction_invariant(self):
        _, sps = generate_phantom(0)
        for sp in sps:
            assert abs(geodesic_loss(sp.q_pos, sp.q_neg) - np.pi / 2) < 1e-9

    def test_background_zero_foreground_bright(self):
        vol, _ = generate_phantom(3)
        arr = vol.intensities
        assert arr[0, 0, 0] == 0.0
        assert arr[-1, -1, -1] == 0.0
        fg = arr[arr > 0.05]
        assert fg.size > 0.1 * arr.size
        assert fg.mean() > 0.9
        # most of the field stays dark, so binarized shapes stay crisp
        assert np.mean(arr == 0.0) > 0.2

    def test_landmarks_detached_from_head(self):
        # a dark moat separates the skull from the surrounding landmarks:
        # every voxel just outside the head surface is exactly zero
        from planeguide.volume import _head_r2

        vol, _ = generate_phantom(0, dims=(96, 96, 96))
        arr = vol.intensities
        w, h, d = vol.dims
        xs = np.linspace(-1.0, 1.0, w)
        ys = np.linspace(-1.0, 1.0, h)
        zs = np.linspace(-1.0, 1.0, d)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        r2 = _head_r2(np.stack([gx, gy, gz], axis=-1))
        moat = (r2 > 1.0) & (r2 <= 1.15)
        assert moat.sum() > 0
        assert np.all(arr[moat] == 0.0)
        assert np.any(arr[r2 > 1.15] > 0.5)

    def test_rejects_small_dims(self):
        with pytest.raises(ValueError):
            generate_phantom(0, dims=(16, 64, 64))


class TestVolumeIO:
    def test_round_trip_bit_exact(self, tmp_path):
        vol = random_volume(13, dims=(9, 7, 5))
        save_volume(vol, tmp_path / "vol.raw")
        loaded = load_volume(tmp_path / "vol.raw")
        np.testing.assert_array_equal(loaded.intensities, vol.intensities)
        assert loaded.name == vol.name
        assert loaded.dims == vol.dims

    def test_payload_size_and_order(self, tmp_path):
        arr = np.zeros((2, 2, 2), dtype=np.float32)
        arr[0, 0, 0] = 0.125
        arr[1, 0, 0] = 0.25
        arr[0, 1, 0] = 0.5
        path = save_volume(Volume(intensities=arr), tmp_path / "tiny.raw")
        payload = path.read_bytes()
        assert len(payload) == 32
        floats = struct.unpack("<8f", payload)
        assert floats[0] == 0.125
        assert floats[1] == 0.25  # x varies fastest
        assert floats[2] == 0.5

    def test_dims_mismatch_errors(self, tmp_path):
        vol = random_volume(1, dims=(4, 4, 4))
        raw = save_volume(vol, tmp_path / "vol.raw")
        sidecar = raw.with_suffix(".json")
        sidecar.write_text(sidecar.read_text().replace("[4, 4, 4]", "[4, 4, 5]"))
        with pytest.raises(ValueError):
            load_volume(tmp_path / "vol.raw")

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_volume(tmp_path / "nope.raw")

    def test_bare_path_gets_suffixes(self, tmp_path):
        vol = random_volume(2, dims=(4, 4, 4))
        raw = save_volume(vol, tmp_path / "atlas")
        assert raw.name == "atlas.raw"
        assert raw.with_suffix(".json").exists()
        loaded = load_volume(tmp_path / "atlas")
        np.testing.assert_array_equal(loaded.intensities, vol.intensities)

    def test_standard_planes_round_trip(self, tmp_path):
        _, sps = generate_phantom(0)
        path = save_standard_planes(sps, tmp_path / "sps.json")
        loaded = load_standard_planes(path)
        assert [sp.sp_id for sp in loaded] == [sp.sp_id for sp in sps]
        for a, b in zip(loaded, sps):
            np.testing.assert_allclose(a.q_pos, b.q_pos, atol=1e-12)
            np.testing.assert_allclose(a.q_neg, b.q_neg, atol=1e-12)
            np.testing.assert_allclose(a.delta_sp, b.delta_sp, atol=1e-12)


class TestPlaneGridType:
    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            PlaneGrid(coords=np.zeros((4, 4, 2)))

    def test_rejects_nonfinite(self):
        arr = np.zeros((2, 2, 3))
        arr[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            PlaneGrid(coords=arr)
