"""Seeded synthetic point data standing in for a city-scale incident extract.

The shipped ``data/urban_points.csv`` is ``urban_points_csv()`` with the
default arguments; a test regenerates it and compares bytes.
"""

from __future__ import annotations

import csv
import io
from importlib import resources

import numpy as np

# (lon, lat, spread in degrees, relative weight)
HOTSPOTS = (
    (-0.0780, 51.5260, 0.0040, 3.0),
    (-0.1410, 51.5150, 0.0050, 2.5),
    (-0.1270, 51.5080, 0.0035, 2.0),
    (-0.0900, 51.5130, 0.0045, 2.0),
    (-0.1180, 51.4620, 0.0050, 1.5),
    (-0.0550, 51.5440, 0.0050, 1.5),
    (-0.2050, 51.5120, 0.0060, 1.2),
    (-0.0200, 51.5040, 0.0050, 1.2),
    (-0.1050, 51.5650, 0.0055, 1.0),
    (-0.1900, 51.4650, 0.0060, 1.0),
    (0.0700, 51.5450, 0.0060, 0.8),
    (-0.3000, 51.5100, 0.0070, 0.8),
    (-0.0950, 51.4200, 0.0065, 0.7),
    (-0.2400, 51.5600, 0.0070, 0.6),
)
WINDOW_LON = (-0.54, 0.33)
WINDOW_LAT = (51.28, 51.70)


def make_urban_points(n: int = 6000, seed: int = 2024, background: float = 0.35, outside: float = 0.05):
    """Clustered points, a uniform background and a few rows outside the window."""
    rng = np.random.default_rng(seed)
    hs = np.array(HOTSPOTS)
    n_out = int(round(outside * n))
    n_bg = int(round(background * n))
    n_hot = n - n_out - n_bg
    lab = rng.choice(len(hs), size=n_hot, p=hs[:, 3] / hs[:, 3].sum())
    hot = hs[lab, :2] + hs[lab, 2:3] * rng.standard_normal((n_hot, 2))
    bg = np.column_stack([rng.uniform(*WINDOW_LON, n_bg), rng.uniform(*WINDOW_LAT, n_bg)])
    far = np.column_stack([rng.uniform(-1.2, 1.0, n_out), rng.uniform(50.9, 52.1, n_out)])
    far[:, 0] = np.where(np.abs(far[:, 0] + 0.1) < 0.5, far[:, 0] + np.sign(far[:, 0] + 0.1) * 0.5, far[:, 0])
    pts = np.vstack([hot, bg, far])
    order = rng.permutation(n)
    pts = pts[order]
    road = rng.choice(np.array(["A", "B", "C"]), size=n, p=[0.85, 0.1, 0.05])
    severity = rng.choice(np.array(["slight", "serious", "fatal"]), size=n, p=[0.8, 0.18, 0.02])
    return pts, road, severity


def urban_points_csv(**kw) -> str:
    pts, road, severity = make_urban_points(**kw)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["longitude", "latitude", "road_class", "severity"])
    for (lon, lat), r, s in zip(pts, road, severity):
        w.writerow([f"{lon:.6f}", f"{lat:.6f}", r, s])
    return buf.getvalue()


def urban_points_path():
    return resources.files("gerve") / "data" / "urban_points.csv"
