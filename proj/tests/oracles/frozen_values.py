"""Independent numpy oracle for the frozen expected values used in the C++ tests.

Run: python3 tests/oracles/frozen_values.py
"""
import numpy as np

np.set_printoptions(precision=17)

# Bottom-face sign pairs (lateral, longitudinal) in cyclic order.
SIGNS = [(1, 1), (-1, 1), (-1, -1), (1, -1)]


def rot_y(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def corners(x, y, z, theta, L, W, H):
    pts = []
    for dy in (H / 2, -H / 2):
        for s1, s2 in SIGNS:
            pts.append(rot_y(theta) @ np.array([s1 * W / 2, dy, s2 * L / 2]) + np.array([x, y, z]))
    return np.array(pts)


def observations(box, fx, fy, cx, cy, b):
    K = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    P2 = K @ np.hstack([np.eye(3), np.zeros((3, 1))])
    P3 = K @ np.hstack([np.eye(3), np.array([[-b], [0], [0]])])
    pts = corners(*box)
    hom = np.hstack([pts, np.ones((8, 1))])
    l = (P2 @ hom.T).T
    r = (P3 @ hom.T).T
    lu, lv = l[:, 0] / l[:, 2], l[:, 1] / l[:, 2]
    ru = r[:, 0] / r[:, 2]
    d = np.linalg.norm(pts[:4], axis=1)
    k = int(np.argmin(d))
    px = [lu.min(), lv.min(), lu.max(), lv.max(), ru.min(), ru.max(), lu[k]]
    norm = [(px[0] - cx) / fx, (px[1] - cy) / fy, (px[2] - cx) / fx, (px[3] - cy) / fy,
            (px[4] - cx) / fx, (px[5] - cx) / fx, (px[6] - cx) / fx]
    return k, px, norm


print("corners of (1, 0.8, 10, 0.3, 3.88, 1.63, 1.53):")
for p in corners(1, 0.8, 10, 0.3, 3.88, 1.63, 1.53):
    print("  {%.17g, %.17g, %.17g}," % tuple(p))

box = (2.5, 0.9, 20.0, 0.7, 3.88, 1.63, 1.53)
k, px, norm = observations(box, 721.5, 721.5, 609.5593, 172.854, 0.54)
print("kitti-like box", box, "perspective vertex", k)
print("  pixels:", ", ".join("%.17g" % v for v in px))
print("  normalized:", ", ".join("%.17g" % v for v in norm))

# Focal loss single cell, Y=0.5, prediction 0.5, alpha=2, beta=4, N clamped to 1.
print("focal single cell: %.17g" % (-(1 - 0.5) ** 4 * 0.5 ** 2 * np.log(1 - 0.5)))
# Kitti rig baseline.
print("kitti baseline: %.17g" % (-(-3.395242e+02 - 4.485728e+01) / 7.215377e+02))
