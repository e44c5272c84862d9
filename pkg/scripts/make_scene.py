#!/usr/bin/env python3
"""Generate the bundled synthetic scene and its golden feature table.

Writes every input the CLI pipeline consumes (band rasters, point clouds,
masks, plot/measurement/weather/germplasm/price CSVs, benchmark trials and
ballots, preference-optimization datasets) under tests/data/scene/, all from
one seed.

The golden features.csv is computed here with deliberately naive oracle code:
scalar per-pixel formulas, brute-force point-in-polygon cell selection, and
brute-force point bucketing, sharing only the final numpy reduction calls
with the library so the comparison is byte-for-byte.
"""

import csv
import json
import math
import os

import numpy as np

SCENE_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "scene")

N_COLS, N_ROWS = 32, 20
CELL = 0.25
NODATA = -9999.0

DATE = "2023-04-22"
SITE = "station-A"

ALTITUDE = 3.0
FOV_H, FOV_V = 62.2, 48.8
SAVI_L = 0.5
CH_PERCENTILE = 0.95
NOISE_FLOOR = 0.05
RING_INNER, RING_OUTER = 0.1, 0.2

PLOTS = {
    "p1": ("Alpha", (0.5, 0.5, 2.5, 2.5)),
    "p2": ("Bravo", (3.0, 0.5, 5.0, 2.5)),
    "p3": ("Charlie", (5.5, 0.5, 7.5, 2.5)),
}

HEAD_COUNTS = {"p1": [52, 48], "p2": [61, 59], "p3": [40, 44]}

MEASUREMENTS = {
    # SPAD, LAI, measured CH (m), raw grain mass (kg), area (ha), moisture
    "p1": (44.1, 3.8, 0.82, 2.45, 0.0004, 0.16),
    "p2": (41.5, 3.2, 0.74, 2.10, 0.0004, 0.14),
    "p3": (38.2, 2.9, 0.66, 1.80, 0.0004, 0.18),
}


# ---------------------------------------------------------------------------
# oracle geometry (scalar mirrors of the library's vectorized arithmetic)
# ---------------------------------------------------------------------------


def pip(px, py, vertices):
    inside = False
    on_edge = False
    n = len(vertices)
    for k in range(n):
        x1, y1 = vertices[k]
        x2, y2 = vertices[(k + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if cross == 0.0 and min(x1, x2) <= px <= max(x1, x2) and min(y1, y2) <= py <= max(y1, y2):
            on_edge = True
        if (y1 > py) != (y2 > py):
            x_int = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_int:
                inside = not inside
    return inside or on_edge


def boundary_distance(px, py, vertices):
    best = math.inf
    n = len(vertices)
    for k in range(n):
        x1, y1 = vertices[k]
        x2, y2 = vertices[(k + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        t = ((px - x1) * dx + (py - y1) * dy) / seg_len2
        t = min(max(t, 0.0), 1.0)
        d2 = (px - (x1 + t * dx)) ** 2 + (py - (y1 + t * dy)) ** 2
        best = min(best, d2)
    return math.sqrt(best)


def cell_center(row, col):
    return (0.0 + (col + 0.5) * CELL, 0.0 + (N_ROWS - row - 0.5) * CELL)


def rect_vertices(rect):
    x0, y0, x1, y1 = rect
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def plot_cells(rect):
    vertices = rect_vertices(rect)
    cells = []
    for i in range(N_ROWS):
        for j in range(N_COLS):
            cx, cy = cell_center(i, j)
            if pip(cx, cy, vertices):
                cells.append((i, j))
    return cells


def region_cells(rect, inner, outer):
    """Cells of the plot union its outer ring, row-major order."""
    vertices = rect_vertices(rect)
    cells = []
    for i in range(N_ROWS):
        for j in range(N_COLS):
            cx, cy = cell_center(i, j)
            in_plot = pip(cx, cy, vertices)
            d = boundary_distance(cx, cy, vertices)
            in_ring = (not in_plot) and (d > inner) and (d <= outer)
            if in_plot or in_ring:
                cells.append((i, j))
    return cells


# ---------------------------------------------------------------------------
# raster writing
# ---------------------------------------------------------------------------


def write_asc(path, values, cell_size=CELL, origin=(0.0, 0.0), nodata=NODATA):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {values.shape[1]}\n")
        fh.write(f"nrows {values.shape[0]}\n")
        fh.write(f"xllcorner {repr(origin[0])}\n")
        fh.write(f"yllcorner {repr(origin[1])}\n")
        fh.write(f"cellsize {repr(cell_size)}\n")
        fh.write(f"NODATA_value {repr(nodata)}\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def in_any_region(i, j, regions):
    return any((i, j) in cells for cells in regions)


def make_bands(rng):
    ranges = {
        "blue": (0.02, 0.10),
        "green": (0.05, 0.20),
        "red": (0.03, 0.15),
        "red_edge": (0.20, 0.40),
        "nir": (0.30, 0.70),
    }
    plot_regions = [set(plot_cells(rect)) for _, rect in PLOTS.values()]
    ms = {}
    for name, (lo, hi) in ranges.items():
        band = rng.uniform(lo, hi, size=(N_ROWS, N_COLS))
        ms[name] = band
    # a few nodata speckles in the background only
    background = [(i, j) for i in range(N_ROWS) for j in range(N_COLS)
                  if not in_any_region(i, j, plot_regions) and cell_center(i, j)[1] > 3.2]
    speckles = [background[int(k)] for k in rng.choice(len(background), size=4, replace=False)]
    for i, j in speckles:
        ms["nir"][i, j] = NODATA

    hs = {}
    hs_ranges = {500: (0.03, 0.12), 560: (0.05, 0.2), 650: (0.03, 0.15),
                 680: (0.04, 0.16), 750: (0.25, 0.5), 840: (0.3, 0.7)}
    for nm, (lo, hi) in hs_ranges.items():
        hs[nm] = rng.uniform(lo, hi, size=(N_ROWS, N_COLS))
    return ms, hs


def make_masks(rng):
    plot_regions = {pid: set(plot_cells(rect)) for pid, (_, rect) in PLOTS.items()}
    veg = np.zeros((N_ROWS, N_COLS))
    lodging = np.zeros((N_ROWS, N_COLS))
    weed = np.zeros((N_ROWS, N_COLS))
    densities = {"p1": (0.85, 0.00, 0.08), "p2": (0.75, 0.30, 0.25), "p3": (0.65, 0.60, 0.55)}
    for pid, cells in plot_regions.items():
        veg_d, lodge_d, weed_d = densities[pid]
        for (i, j) in sorted(cells):
            veg[i, j] = float(rng.random() < veg_d)
            lodging[i, j] = float(rng.random() < lodge_d)
            weed[i, j] = float(rng.random() < weed_d)
    # weeds also grow outside the plots (rings and background)
    for i in range(N_ROWS):
        for j in range(N_COLS):
            if not any((i, j) in cells for cells in plot_regions.values()):
                weed[i, j] = float(rng.random() < 0.30)
    return veg, lodging, weed


def make_clouds(rng):
    """Ground and canopy point clouds, two points per cell."""
    heights = {"p1": 0.85, "p2": 0.75, "p3": 0.65}
    plot_regions = {pid: set(plot_cells(rect)) for pid, (_, rect) in PLOTS.items()}
    ground_pts, canopy_pts = [], []
    for i in range(N_ROWS):
        for j in range(N_COLS):
            cx, cy = cell_center(i, j)
            terrain = 10.0 + 0.02 * cx + 0.01 * cy
            crop = 0.0
            for pid, cells in plot_regions.items():
                if (i, j) in cells:
                    crop = heights[pid]
            for _ in range(2):
                dx, dy = rng.uniform(-0.1, 0.1, 2)
                ground_pts.append((cx + dx, cy + dy, terrain + rng.uniform(0.0, 0.02)))
                dx, dy = rng.uniform(-0.1, 0.1, 2)
                jitter = rng.uniform(-0.05, 0.0) if crop else rng.uniform(0.0, 0.02)
                canopy_pts.append((cx + dx, cy + dy, terrain + crop + jitter))
    return ground_pts, canopy_pts


def bucket_raster(points, aggregator):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    origin_x = math.floor(min(xs) / CELL) * CELL
    origin_y = math.floor(min(ys) / CELL) * CELL
    n_cols = max(1, int(math.ceil((max(xs) - origin_x) / CELL)))
    n_rows = max(1, int(math.ceil((max(ys) - origin_y) / CELL)))
    buckets = {}
    for x, y, z in points:
        col = min(int((x - origin_x) // CELL), n_cols - 1)
        rfb = min(int((y - origin_y) // CELL), n_rows - 1)
        buckets.setdefault((n_rows - 1 - rfb, col), []).append(z)
    values = np.full((n_rows, n_cols), NODATA)
    for (i, j), zs in buckets.items():
        values[i, j] = min(zs) if aggregator == "min" else max(zs)
    return values


# ---------------------------------------------------------------------------
# golden feature computation (oracle path)
# ---------------------------------------------------------------------------


def vi_value(name, red, green, nir):
    if name == "NDVI":
        return None if nir + red == 0.0 else (nir - red) / (nir + red)
    if name == "SAVI":
        d = nir + red + SAVI_L
        return None if d == 0.0 else (1.0 + SAVI_L) * (nir - red) / d
    if name == "kNDVI":
        return None if nir + red == 0.0 else (nir - red) / (nir + red)  # tanh applied vectorized
    if name == "NIRv":
        return None if nir + red == 0.0 else nir * ((nir - red) / (nir + red))
    if name == "PSRI":
        return None if nir == 0.0 else (red - green) / nir
    raise ValueError(name)


def vi_grid(name, red_band, green_band, nir_band):
    out = np.full((N_ROWS, N_COLS), NODATA)
    for i in range(N_ROWS):
        for j in range(N_COLS):
            r, g, n = red_band[i, j], green_band[i, j], nir_band[i, j]
            if NODATA in (r, g, n):
                continue
            value = vi_value(name, r, g, n)
            if value is not None:
                out[i, j] = value
    if name == "kNDVI":
        defined = out != NODATA
        out[defined] = np.tanh(out[defined] * out[defined])
    return out


def psri_hs_grid(hs):
    out = np.full((N_ROWS, N_COLS), NODATA)
    for i in range(N_ROWS):
        for j in range(N_COLS):
            r680, r500, r750 = hs[680][i, j], hs[500][i, j], hs[750][i, j]
            if NODATA in (r680, r500, r750) or r750 == 0.0:
                continue
            out[i, j] = (r680 - r500) / r750
    return out


def plot_mean(grid, cells):
    selected = [grid[i, j] for (i, j) in cells if grid[i, j] != NODATA]
    return float(np.mean(np.array(selected)))


def golden_features(ms, hs, veg, lodging, weed, dem, dsm):
    chm = np.full((N_ROWS, N_COLS), NODATA)
    for i in range(N_ROWS):
        for j in range(N_COLS):
            if dsm[i, j] == NODATA or dem[i, j] == NODATA:
                continue
            diff = dsm[i, j] - dem[i, j]
            if diff >= -NOISE_FLOOR:
                chm[i, j] = max(diff, 0.0)

    rows = []
    for pid, (germ, rect) in PLOTS.items():
        cells = plot_cells(rect)
        features = {}
        layers = {}
        for name in ("NDVI", "SAVI", "kNDVI", "NIRv", "PSRI"):
            layers[f"{name}_MS"] = vi_grid(name, ms["red"], ms["green"], ms["nir"])
            if name == "PSRI":
                layers["PSRI_HS"] = psri_hs_grid(hs)
            else:
                layers[f"{name}_HS"] = vi_grid(name, hs[650], hs[560], hs[840])
        for column, grid in layers.items():
            features[column] = plot_mean(grid, cells)

        ch_values = np.array([chm[i, j] for (i, j) in cells if chm[i, j] != NODATA])
        ordered = np.sort(ch_values)
        rank = max(1, math.ceil(CH_PERCENTILE * ordered.size))
        features["CH"] = float(ordered[rank - 1])

        area = CELL * CELL
        v_low = float(np.sum(np.abs(ch_values - ch_values.min())) * area)
        v_mean = float(np.sum(np.abs(ch_values - np.mean(ch_values))) * area)
        features["CV"] = (v_low + v_mean) / 2.0

        n_all = len(cells)
        features["FVC"] = sum(1 for (i, j) in cells if veg[i, j] == 1.0) / n_all
        features["PL_ratio"] = sum(1 for (i, j) in cells if lodging[i, j] == 1.0) / n_all

        wl_cells = region_cells(rect, RING_INNER, RING_OUTER)
        features["WL_ratio"] = (
            sum(1 for (i, j) in wl_cells if weed[i, j] == 1.0) / len(wl_cells)
        )

        width = 2.0 * ALTITUDE * math.tan(math.radians(FOV_H) / 2.0)
        height = 2.0 * ALTITUDE * math.tan(math.radians(FOV_V) / 2.0)
        mean_heads = float(np.mean(np.asarray(HEAD_COUNTS[pid], dtype=np.float64)))
        features["WH_density"] = mean_heads / (width * height)

        spad, lai, mch, mass, area_ha, moisture = MEASUREMENTS[pid]
        features["SPAD"] = spad
        features["LAI"] = lai
        features["measured_CH"] = mch
        yield_kg_ha = (mass / area_ha) * (1.0 - moisture) / (1.0 - 0.125)
        rows.append((pid, germ, features, yield_kg_ha))
    return rows


FEATURE_ORDER = (
    "NDVI_MS", "SAVI_MS", "kNDVI_MS", "NIRv_MS", "PSRI_MS",
    "NDVI_HS", "SAVI_HS", "kNDVI_HS", "NIRv_HS", "PSRI_HS",
    "CH", "CV", "FVC", "PL_ratio", "WL_ratio", "WH_density",
    "SPAD", "LAI", "measured_CH",
)


def write_golden(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("plot_id", "germplasm_id", "date", "site") + FEATURE_ORDER
                        + ("yield_kg_ha",))
        for pid, germ, features, yield_kg_ha in rows:
            row = [pid, germ, DATE, SITE]
            row += [repr(float(features[name])) for name in FEATURE_ORDER]
            row.append(repr(float(yield_kg_ha)))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# auxiliary CSV / JSONL fixtures
# ---------------------------------------------------------------------------


def write_plots_csv(path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("plot_id", "germplasm_id", "vertex_index", "x", "y"))
        for pid, (germ, rect) in PLOTS.items():
            for idx, (x, y) in enumerate(rect_vertices(rect)):
                writer.writerow((pid, germ, idx, repr(x), repr(y)))


def write_simple_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def make_weather(rng):
    rows = []
    for day in range(1, 21):
        rows.append((
            SITE, f"2023-04-{day:02d}",
            repr(round(12.0 + 6.0 * rng.random(), 2)),
            repr(round(6.0 + 4.0 * rng.random(), 2)),
            repr(round(max(0.0, rng.normal(1.5, 2.0)), 2)),
            repr(round(120.0 + 60.0 * rng.random(), 1)),
            repr(round(0.5 + 3.0 * rng.random(), 2)),
        ))
    return rows


GERMPLASM_ROWS = [
    ("Alpha", "China", "15.2", "0.42", "36", "R", "MR", "R", "R", "MR", "195", "75", "44", "hard"),
    ("Bravo", "Japan", "13.4", "0.38", "30", "MR", "S", "MR", "S", "S", "206", "88", "41", "medium"),
    ("Charlie", "Italy", "14.6", "0.40", "33", "S", "MR", "S", "MR", "R", "190", "79", "39", "hard"),
    ("Delta", "Turkey", "12.1", "0.35", "27", "S", "S", "S", "S", "S", "221", "103", "45", "soft"),
    ("Nongda 3486", "China", "14.9", "0.41", "34", "R", "R", "MR", "MR", "R", "198", "82", "43", "hard"),
]

PRICE_ROWS = [
    ("Miyun District", "Nongda 3486", "150", "25", "Beijing", "2024-06-01"),
    ("Miyun District", "Jingdong 22", "140", "25", "Beijing", "2024-07-10"),
    ("Chengdu", "Kechengmai 4", "25", "2.5", "Sichuan", "2024-07-24"),
    ("Chengdu", "Chuanmai 104", "32", "5", "Sichuan", "2024-06-15"),
    ("Zhengzhou", "Zhengmai 379", "118", "20", "Henan", "2024-06-20"),
]


def make_trials():
    rows = []
    rng = np.random.default_rng(99)
    models = ("tuned-a", "tuned-b", "baseline")
    quality = {"tuned-a": 0.05, "tuned-b": 0.12, "baseline": 0.35}
    for model in models:
        rel = quality[model]
        for i in range(8):
            ref = 4000.0 + 150.0 * i
            ans = ref * (1.0 + rng.normal(0.0, rel / 2))
            rows.append((model, "phenotyping_estimation", "Yield", f"y{i}", 0,
                         repr(round(ans, 1)), "", "", repr(ref), "", "", ""))
        labels = ("no_lodging", "slight", "severe")
        for i in range(6):
            truth = labels[i % 3]
            answer = truth if rng.random() > rel else labels[(i + 1) % 3]
            rows.append((model, "phenotyping_estimation", "PL", f"pl{i}", 0,
                         "", answer, "", "", truth, "", ""))
        for i in range(6):
            rows.append((model, "germplasm_screening", "HQ", f"hq{i}", 0,
                         "", "", "true" if rng.random() > rel else "false", "", "", "", ""))
        for i in range(6):
            ref = 150.0
            ans = ref * (1.0 + rng.normal(0.0, rel / 2))
            rows.append((model, "seed_price_query", "SP", f"sp{i}", 0,
                         repr(round(ans, 1)), "", "", repr(ref), "", "", ""))
        for i in range(5):
            ref = 50.0
            ans = ref * (1.0 + rng.normal(0.0, rel))
            rows.append((model, "phenotyping_estimation", "Yield", f"st{i}", 0,
                         repr(round(ans, 2)), "", "", repr(ref), "", "consistency", ""))
        for i in range(5):
            rows.append((model, "cultivation_recommendation", "CT", f"rb{i}", 0,
                         "", "", "", "", "", "robustness",
                         "true" if rng.random() > rel else "false"))
    return rows


def make_ballots():
    rows = []
    rng = np.random.default_rng(7)
    models = ("tuned-a", "tuned-b", "baseline")
    axes = ("logical_deduction", "inductive_reasoning", "explanation")
    for t in range(9):
        axis = axes[t % 3]
        order = list(rng.permutation(3))
        # bias: tuned-a usually wins
        if rng.random() < 0.7:
            order.sort(key=lambda idx: 0 if models[idx] == "tuned-a" else 1)
        scores = {models[idx]: 3 - rank for rank, idx in enumerate(order)}
        for model, score in scores.items():
            rows.append((f"t{t}", model, score, axis))
    return rows


def make_prefopt_files(out_dir):
    sft = [
        {"prompt": [0], "answer": [1, 2]},
        {"prompt": [1], "answer": [2, 3]},
        {"prompt": [2], "answer": [3, 4]},
        {"prompt": [3], "answer": [4, 5]},
    ]
    rm = [
        {"prompt": [0], "chosen": [1, 2], "rejected": [5, 5]},
        {"prompt": [1], "chosen": [2, 3], "rejected": [0, 0]},
        {"prompt": [2], "chosen": [3, 4], "rejected": [1, 1]},
        {"prompt": [3], "chosen": [4, 5], "rejected": [2, 2]},
    ]
    ppo = [{"prompt": [p]} for p in range(4)]
    for name, rows in (("sft.jsonl", sft), ("rm_pairs.jsonl", rm), ("ppo_prompts.jsonl", ppo)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")


def main():
    out = os.path.abspath(SCENE_DIR)
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "golden"), exist_ok=True)
    rng = np.random.default_rng(20230422)

    ms, hs = make_bands(rng)
    for name, band in ms.items():
        write_asc(os.path.join(out, f"ms_{name}.asc"), band)
    for nm, band in hs.items():
        write_asc(os.path.join(out, f"hs_{nm}.asc"), band)

    veg, lodging, weed = make_masks(rng)
    write_asc(os.path.join(out, "vegetation_mask.asc"), veg)
    write_asc(os.path.join(out, "lodging_mask.asc"), lodging)
    write_asc(os.path.join(out, "weed_mask.asc"), weed)

    ground_pts, canopy_pts = make_clouds(rng)
    for name, pts in (("ground_cloud.xyz", ground_pts), ("canopy_cloud.xyz", canopy_pts)):
        with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
            fh.write("# synthetic scene point cloud\n")
            for x, y, z in pts:
                fh.write(f"{repr(float(x))} {repr(float(y))} {repr(float(z))}\n")

    write_plots_csv(os.path.join(out, "plots.csv"))
    write_simple_csv(
        os.path.join(out, "head_counts.csv"),
        ("plot_id", "image_id", "count"),
        [(pid, f"img{k}", c) for pid, counts in HEAD_COUNTS.items()
         for k, c in enumerate(counts)],
    )
    write_simple_csv(
        os.path.join(out, "measurements.csv"),
        ("plot_id", "SPAD", "LAI", "measured_CH", "raw_mass_kg", "plot_area_ha", "moisture"),
        [(pid,) + tuple(repr(float(v)) for v in vals) for pid, vals in MEASUREMENTS.items()],
    )
    write_simple_csv(
        os.path.join(out, "weather.csv"),
        ("site", "date", "t_mean", "dew_point", "precip", "net_radiation", "wind_speed"),
        make_weather(rng),
    )
    write_simple_csv(
        os.path.join(out, "germplasm.csv"),
        ("variety_name", "origin", "crude_protein", "lysine", "sedimentation_value",
         "stripe_rust", "leaf_rust", "powdery_mildew", "drought", "cold",
         "maturity", "plant_height", "thousand_grain_weight", "grain_hardness"),
        GERMPLASM_ROWS,
    )
    write_simple_csv(
        os.path.join(out, "prices.csv"),
        ("observation_point", "variety_name", "price", "specification", "planting_area", "date"),
        PRICE_ROWS,
    )
    write_simple_csv(
        os.path.join(out, "trials.csv"),
        ("model_id", "task", "subtask", "question_id", "trial_index", "answer_numeric",
         "answer_label", "judged_correct", "reference_value", "reference_label",
         "stability_protocol", "text_pass"),
        make_trials(),
    )
    write_simple_csv(
        os.path.join(out, "ballots.csv"),
        ("test_id", "model_id", "score", "axis"),
        make_ballots(),
    )
    make_prefopt_files(out)

    dem = bucket_raster(ground_pts, "min")
    dsm = bucket_raster(canopy_pts, "max")
    rows = golden_features(ms, hs, veg, lodging, weed, dem, dsm)
    write_golden(rows, os.path.join(out, "golden", "features.csv"))
    print(f"scene written to {out}")


if __name__ == "__main__":
    main()
