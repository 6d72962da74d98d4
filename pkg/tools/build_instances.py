"""Regenerate the shipped instance documents under src/maintnet/instances/.

The 8-hospital network uses the published travel-time matrix (quarter-hour
units).  The 35-hospital network is a reconstruction: city coordinates are
converted to road travel times (great-circle distance x 1.2 detour factor,
80 km/h, rounded up to quarter hours), with the 8-hospital block kept
identical to the published matrix.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from maintnet.instances import COST_STRUCTURES, DEGRADATION_FAMILIES  # noqa: E402

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "maintnet" / "instances"

ACADEMIC_TRAVEL = [
    [0, 1, 11, 4, 3, 10, 7, 3],
    [1, 0, 11, 5, 3, 10, 7, 3],
    [11, 11, 0, 11, 12, 17, 8, 10],
    [4, 5, 11, 0, 3, 13, 7, 4],
    [3, 3, 12, 3, 0, 12, 8, 4],
    [10, 10, 17, 13, 12, 0, 11, 10],
    [7, 7, 8, 7, 8, 11, 0, 5],
    [3, 3, 10, 4, 4, 10, 5, 0],
]

# (name, latitude, longitude); the first 8 rows are the academic hospitals
# in the order of the published travel matrix.
CITIES = [
    ("Amsterdam", 52.334, 4.860),
    ("Amsterdam", 52.294, 4.958),
    ("Maastricht", 50.849, 5.688),
    ("Rotterdam", 51.911, 4.468),
    ("Leiden", 52.166, 4.477),
    ("Groningen", 53.221, 6.576),
    ("Nijmegen", 51.824, 5.866),
    ("Utrecht", 52.086, 5.180),
    ("Arnhem", 51.984, 5.940),
    ("Eindhoven", 51.441, 5.479),
    ("Tilburg", 51.561, 5.084),
    ("Breda", 51.587, 4.776),
    ("Den Haag", 52.077, 4.312),
    ("Zwolle", 52.513, 6.094),
    ("Enschede", 52.220, 6.893),
    ("Almere", 52.351, 5.220),
    ("Haarlem", 52.381, 4.637),
    ("Amersfoort", 52.156, 5.390),
    ("Apeldoorn", 52.211, 5.963),
    ("'s-Hertogenbosch", 51.698, 5.304),
    ("Dordrecht", 51.813, 4.673),
    ("Delft", 52.011, 4.357),
    ("Venlo", 51.371, 6.172),
    ("Deventer", 52.255, 6.164),
    ("Alkmaar", 52.632, 4.749),
    ("Leeuwarden", 53.202, 5.799),
    ("Assen", 52.993, 6.564),
    ("Emmen", 52.785, 6.895),
    ("Hilversum", 52.224, 5.175),
    ("Gouda", 52.011, 4.711),
    ("Roermond", 51.194, 5.988),
    ("Middelburg", 51.498, 3.613),
    ("Hoorn", 52.642, 5.059),
    ("Heerlen", 50.888, 5.980),
    ("Sittard", 50.998, 5.867),
]

ROAD_FACTOR = 1.2
KM_PER_QUARTER = 20.0  # 80 km/h


def haversine_km(a, b) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    dlat, dlon = lat2 - lat1, lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def planar_coords(cities):
    lat0, lon0 = 52.1, 5.3
    out = []
    for _, lat, lon in cities:
        x = (lon - lon0) * 111.320 * math.cos(math.radians(lat0))
        y = (lat - lat0) * 110.574
        out.append([round(x, 3), round(y, 3)])
    return out


def reconstructed_travel(cities):
    n = len(cities)
    travel = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            km = haversine_km(cities[i][1:], cities[j][1:]) * ROAD_FACTOR
            quarters = max(1, math.ceil(km / KM_PER_QUARTER))
            travel[i][j] = travel[j][i] = quarters
    for i in range(8):
        for j in range(8):
            travel[i][j] = ACADEMIC_TRAVEL[i][j]
    return travel


def unit_travel(n):
    return [[0 if i == j else 1 for j in range(n)] for i in range(n)]


def write(doc, name):
    path = OUT_DIR / f"{name}.json"
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    print("wrote", path)


def main():
    write(
        {
            "name": "M4K1-Q2Q3C2",
            "notes": "Four identical-location machines, unit travel and repair times, "
            "two slow and two fast degraders, single engineer.",
            "travel": unit_travel(4),
            "degradation_matrices": {"Q2": DEGRADATION_FAMILIES["Q2"], "Q3": DEGRADATION_FAMILIES["Q3"]},
            "machine_degradation": ["Q2", "Q2", "Q3", "Q3"],
            "repair_pm": 1,
            "repair_cm": 1,
            "costs": {"name": "C2"},
            "gamma": 0.99,
            "initial_locations": [0],
        },
        "M4K1-Q2Q3C2",
    )
    write(
        {
            "name": "M6K1-Q2Q3Q4C2",
            "notes": "Six machines, unit travel and repair times, mixed degradation "
            "speeds including a seven-level chain, single engineer.",
            "travel": unit_travel(6),
            "degradation_matrices": {
                "Q2": DEGRADATION_FAMILIES["Q2"],
                "Q3": DEGRADATION_FAMILIES["Q3"],
                "Q4": DEGRADATION_FAMILIES["Q4"],
            },
            "machine_degradation": ["Q2", "Q2", "Q3", "Q3", "Q4", "Q4"],
            "repair_pm": 1,
            "repair_cm": 1,
            "costs": {"name": "C2"},
            "gamma": 0.99,
            "initial_locations": [0],
        },
        "M6K1-Q2Q3Q4C2",
    )

    names8 = [c[0] for c in CITIES[:8]]
    coords8 = planar_coords(CITIES[:8])
    for matrix, costs, name in (("Qt1", "C1", "M8K3-Qt1C1"), ("Qt2", "C3", "M8K3-Qt2C3")):
        write(
            {
                "name": name,
                "notes": "Eight academic hospitals; travel times in quarter hours; "
                "repairs take one hour; engineers based in Amsterdam, "
                "Maastricht and Rotterdam.",
                "locations": names8,
                "coords": coords8,
                "travel": ACADEMIC_TRAVEL,
                "degradation_matrices": {matrix: DEGRADATION_FAMILIES[matrix]},
                "machine_degradation": [matrix] * 8,
                "repair_pm": 4,
                "repair_cm": 4,
                "costs": {"name": costs},
                "gamma": 0.99,
                "initial_locations": [0, 2, 3],
            },
            name,
        )

    names35 = [c[0] for c in CITIES]
    coords35 = planar_coords(CITIES)
    travel35 = reconstructed_travel(CITIES)
    for matrix, costs, name in (("Qt3", "C1", "M35K5-Qt3C1"), ("Qt4", "C3", "M35K5-Qt4C3")):
        write(
            {
                "name": name,
                "notes": "RECONSTRUCTED network: 35 hospital cities with travel times "
                "derived from great-circle distances (1.2 road factor, 80 km/h, "
                "rounded up to quarter hours); the 8 academic-hospital entries "
                "use the published matrix. Engineers based in Amsterdam, "
                "Maastricht, Rotterdam, Arnhem and Groningen.",
                "locations": names35,
                "coords": coords35,
                "travel": travel35,
                "degradation_matrices": {matrix: DEGRADATION_FAMILIES[matrix]},
                "machine_degradation": [matrix] * 35,
                "repair_pm": 4,
                "repair_cm": 4,
                "costs": {"name": costs},
                "gamma": 0.99,
                "initial_locations": [0, 2, 3, 8, 5],
            },
            name,
        )


if __name__ == "__main__":
    main()
