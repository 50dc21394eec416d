#!/usr/bin/env python3
"""Regenerates the checked-in test fixtures under assets/.

Everything here is computed with numpy only, deliberately sharing no code
with the C++ library, so the fixtures double as an independent oracle:

  assets/shapes/{star,pentagon,arrow}.json   target shapes (unit mean radius)
  assets/sketches/pentagon.json              the pentagon as drawn pixels
  assets/sketches/pentagon_depth.json        same pixels with exact ray depths
  assets/sketches/studio_camera.json         the built-in synthetic camera
  assets/sketches/studio_plane.json          the y=0 surface plane
  assets/golden/pentagon_projected.json      expected `project` output

Each shape is asserted to be genuinely non-circular: the best-fitting circle
(radius tuned to minimize the symmetric Hausdorff distance) must stay at
least 0.15 away, which keeps the trained-model-vs-bare-circle comparison in
the acceptance suite meaningful.

Run from the repository root:  python3 scripts/make_fixtures.py
"""

import json
import os
import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Built-in studio camera: 640x640 image, one focal length of 500 px, sitting
# 1.5 m above the origin looking straight down (90 degree rotation about x
# maps the optical axis to -y). Image u maps to world x, image v to world z.
CAM = {
    "fx": 500.0,
    "fy": 500.0,
    "cx": 320.0,
    "cy": 320.0,
    "position": [0.0, 1.5, 0.0],
    "orientation": [np.sqrt(0.5), np.sqrt(0.5), 0.0, 0.0],
}
PLANE = {"point": [0.0, 0.0, 0.0], "normal": [0.0, 1.0, 0.0], "hint_x": [1.0, 0.0, 0.0]}


def quat_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def chaikin(poly, iterations):
    """Corner-cutting smoothing of a closed polygon."""
    pts = np.asarray(poly, dtype=float)
    for _ in range(iterations):
        nxt = np.roll(pts, -1, axis=0)
        quarter = 0.75 * pts + 0.25 * nxt
        three_quarter = 0.25 * pts + 0.75 * nxt
        pts = np.empty((2 * len(pts), 2))
        pts[0::2] = quarter
        pts[1::2] = three_quarter
    return pts


def resample_closed(poly, n):
    """n points spaced uniformly by arc length along the closed polyline."""
    pts = np.asarray(poly, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = np.linspace(0.0, total, n, endpoint=False)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / seg[idx]
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


def normalize(points):
    """Centroid to the origin, mean radius to 1. Returns points + transform."""
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = np.linalg.norm(centered, axis=1).mean()
    return centered / scale, {"translation": list(centroid), "scale": float(scale)}


def tuned_circle_hausdorff(points):
    """min over r of the symmetric Hausdorff distance to the circle of radius r.

    The shape is centered, so point-to-circle distance is | |p| - r |; the
    circle-to-shape direction is evaluated on a dense circle sampling.
    """
    pts = np.asarray(points, dtype=float)
    radii = np.linalg.norm(pts, axis=1)
    angles = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
    best = np.inf
    for r in np.arange(0.5, 1.5, 1e-3):
        d_shape_to_circle = np.abs(radii - r).max()
        circle = r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        d2 = ((circle[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        d_circle_to_shape = np.sqrt(d2.min(axis=1)).max()
        best = min(best, max(d_shape_to_circle, d_circle_to_shape))
    return best


def star_shape(n):
    # Five-pointed star as a smooth radial wave; sampled uniformly in angle
    # first, then re-spaced by arc length like a drawn stroke would be.
    theta = np.linspace(0.0, 2.0 * np.pi, 2048, endpoint=False)
    r = 1.0 + 0.35 * np.cos(5.0 * theta)
    poly = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return resample_closed(poly, n)


def pentagon_shape(n):
    # Regular pentagon stretched horizontally; the stretch keeps the best
    # circle visibly far away. Lightly corner-smoothed, as a hand-drawn
    # stroke has no exact corners.
    theta = np.pi / 2.0 + np.linspace(0.0, 2.0 * np.pi, 5, endpoint=False)
    verts = np.stack([1.35 * np.cos(theta), np.sin(theta)], axis=1)
    return resample_closed(chaikin(verts, 2), n)


def arrow_shape(n):
    # Block arrow pointing +x, concave at the head-shaft junction.
    verts = np.array(
        [
            [1.6, 0.0],
            [0.4, 0.85],
            [0.4, 0.38],
            [-1.3, 0.38],
            [-1.3, -0.38],
            [0.4, -0.38],
            [0.4, -0.85],
        ]
    )
    return resample_closed(chaikin(verts, 3), n)


def write_json(path, obj):
    full = os.path.join(ROOT, path)
    os.makedirs(os.path.dirname(full), exist_ok=True)
    with open(full, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")
    print(f"wrote {path}")


def target_payload(points, transform):
    return {
        "v": 1,
        "points": [[float(x), float(z)] for x, z in points],
        "transform": transform,
    }


def make_shapes():
    for name, build, n in [
        ("star", star_shape, 280),
        ("pentagon", pentagon_shape, 260),
        ("arrow", arrow_shape, 240),
    ]:
        raw = build(n)
        pts, _ = normalize(raw)
        assert 200 <= len(pts) <= 300, name
        assert abs(np.linalg.norm(pts, axis=1).mean() - 1.0) < 1e-12, name
        assert np.abs(pts.mean(axis=0)).max() < 1e-12, name
        h = tuned_circle_hausdorff(pts)
        assert h >= 0.15, f"{name}: best circle is only {h:.3f} away"
        print(f"{name}: {len(pts)} points, tuned-circle hausdorff {h:.3f}")
        # The fixture is already in normalized coordinates, so its transform
        # is the identity.
        write_json(
            f"assets/shapes/{name}.json",
            target_payload(pts, {"translation": [0.0, 0.0], "scale": 1.0}),
        )


def make_sketch_and_golden():
    # The pentagon drawn as pixels: 150 px nominal radius, deliberately
    # off-center so the projected transform has a nonzero translation.
    shape, _ = normalize(pentagon_shape(260))
    pixels = 150.0 * shape + np.array([352.0, 296.0])

    write_json(
        "assets/sketches/pentagon.json",
        [{"u": float(u), "v": float(v)} for u, v in pixels],
    )
    write_json("assets/sketches/studio_camera.json", CAM)
    write_json("assets/sketches/studio_plane.json", PLANE)

    # Trace each pixel ray to the y=0 plane: d = R [ (u-cx)/fx, (v-cy)/fy, 1 ].
    rot = quat_matrix(CAM["orientation"])
    origin = np.array(CAM["position"])
    dirs_cam = np.stack(
        [
            (pixels[:, 0] - CAM["cx"]) / CAM["fx"],
            (pixels[:, 1] - CAM["cy"]) / CAM["fy"],
            np.ones(len(pixels)),
        ],
        axis=1,
    )
    dirs = dirs_cam @ rot.T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t = -origin[1] / dirs[:, 1]
    assert (t > 0).all()
    traced = origin + t[:, None] * dirs
    assert np.abs(traced[:, 1]).max() < 1e-12

    # Same pixels with the exact along-ray depth: trace_with_depth and
    # trace_to_plane must then agree.
    write_json(
        "assets/sketches/pentagon_depth.json",
        [
            {"u": float(u), "v": float(v), "depth": float(d)}
            for (u, v), d in zip(pixels, t)
        ],
    )

    # The y=0 plane with hint (1,0,0) is already the canonical frame, so
    # plane coordinates are just world (x, z).
    planar = traced[:, [0, 2]]
    normalized, transform = normalize(planar)
    write_json(
        "assets/golden/pentagon_projected.json",
        target_payload(normalized, {"translation": list(transform["translation"]), "scale": transform["scale"]}),
    )

    # Oracle self-check: denormalize, lift to the plane, reproject through
    # the camera, and require the original pixels back.
    world = np.stack(
        [
            transform["scale"] * normalized[:, 0] + transform["translation"][0],
            np.zeros(len(normalized)),
            transform["scale"] * normalized[:, 1] + transform["translation"][1],
        ],
        axis=1,
    )
    back_cam = (world - origin) @ rot  # rot is orthogonal: inverse = transpose
    reproj = np.stack(
        [
            CAM["cx"] + CAM["fx"] * back_cam[:, 0] / back_cam[:, 2],
            CAM["cy"] + CAM["fy"] * back_cam[:, 1] / back_cam[:, 2],
        ],
        axis=1,
    )
    err = np.abs(reproj - pixels).max()
    assert err < 1e-9, f"oracle reprojection error {err}"
    print(f"golden: reprojection self-check {err:.2e} px")


if __name__ == "__main__":
    np.random.seed(0)  # nothing random today, but keep reruns bit-stable
    make_shapes()
    make_sketch_and_golden()
