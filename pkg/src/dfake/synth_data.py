"""Procedural face dataset with ground-truth source/target pairing.

Every fake sample is composed from two rendered identities, so the source and
target images that real-world forgery benchmarks only provide implicitly are
available by construction. Four composition families span the spectrum from
blend-heavy to target-dominant forgeries.
"""

import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np
from PIL import Image

METHODS = ("REAL", "FULL_BLEND", "FACE_REPLACE", "EXPRESSION_TRANSFER", "GEOMETRY_WARP")
FAKE_METHODS = METHODS[1:]
SUPPORTED_SIZES = (32, 64, 128)
GENERATOR_VERSION = "1.0"

# seed-space offsets keeping identity pools disjoint across splits
_SPLIT_POOL_BASE = {"train": 0, "val": 1_000_000, "test": 2_000_000, "pretrain": 3_000_000}


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class IdentityParams:
    seed: int
    face_hue: float
    face_aspect: float
    eye_spacing: float
    eye_shape: float
    mouth_curve: float
    skin_texture_freq: float
    background_hue: float

    def __post_init__(self):
        _check_range("face_hue", self.face_hue, 0.0, 1.0)
        _check_range("face_aspect", self.face_aspect, 0.7, 1.3)
        _check_range("eye_spacing", self.eye_spacing, 0.2, 0.5)
        _check_range("eye_shape", self.eye_shape, 0.0, 1.0)
        _check_range("mouth_curve", self.mouth_curve, -1.0, 1.0)
        _check_range("skin_texture_freq", self.skin_texture_freq, 1.0, 8.0)
        _check_range("background_hue", self.background_hue, 0.0, 1.0)


@dataclass(frozen=True)
class ExpressionParams:
    mouth_open: float
    brow_raise: float
    head_tilt: float

    def __post_init__(self):
        _check_range("mouth_open", self.mouth_open, 0.0, 1.0)
        _check_range("brow_raise", self.brow_raise, 0.0, 1.0)
        _check_range("head_tilt", self.head_tilt, -0.2, 0.2)


@dataclass
class SampleTriplet:
    image: np.ndarray
    source_image: np.ndarray
    target_image: np.ndarray
    label: int
    method: str
    mix_source: float
    mix_target: float
    sample_id: str = ""
    identity_seeds: tuple = (0, 0)


def _check_range(name, value, lo, hi):
    if not (lo <= value <= hi):
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def sample_identity(rng, seed=None):
    """Draw identity parameters uniformly within their declared ranges."""
    if seed is None:
        seed = int(rng.integers(0, 2**31 - 1))
    return IdentityParams(
        seed=seed,
        face_hue=float(rng.uniform(0.0, 1.0)),
        face_aspect=float(rng.uniform(0.7, 1.3)),
        eye_spacing=float(rng.uniform(0.2, 0.5)),
        eye_shape=float(rng.uniform(0.0, 1.0)),
        mouth_curve=float(rng.uniform(-1.0, 1.0)),
        skin_texture_freq=float(rng.uniform(1.0, 8.0)),
        background_hue=float(rng.uniform(0.0, 1.0)),
    )


def identity_from_seed(seed):
    """Deterministic identity for a pool seed."""
    return sample_identity(np.random.default_rng(seed), seed=seed)


def sample_expression(rng):
    return ExpressionParams(
        mouth_open=float(rng.uniform(0.0, 1.0)),
        brow_raise=float(rng.uniform(0.0, 1.0)),
        head_tilt=float(rng.uniform(-0.2, 0.2)),
    )


def _hsv_to_rgb(h, s, v):
    h = (h % 1.0) * 6.0
    i = int(h) % 6
    f = h - int(h)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def render(identity, expr, size):
    """Deterministic rasterization of a face; values in [0, 1], shape (size, size, 3)."""
    img, _ = render_with_regions(identity, expr, size)
    return img


def render_with_regions(identity, expr, size):
    """Render plus boolean region masks (face, inner_face, mouth, brow, eyes).

    Region masks depend only on identity geometry and head tilt, never on
    mouth_open / brow_raise, so the mouth mask of one render covers the mouth
    at any openness.
    """
    if size not in SUPPORTED_SIZES:
        raise ValueError(f"unsupported size {size}; expected one of {SUPPORTED_SIZES}")

    coords = (np.arange(size) + 0.5) / size
    x, y = np.meshgrid(coords, coords)  # x: column, y: row
    cx, cy = 0.5, 0.52

    # tilt the face by rotating the sampling grid around the center
    cos_t, sin_t = math.cos(expr.head_tilt), math.sin(expr.head_tilt)
    dx, dy = x - cx, y - cy
    xr = cos_t * dx + sin_t * dy
    yr = -sin_t * dx + cos_t * dy

    rx = 0.30 * math.sqrt(identity.face_aspect)
    ry = 0.36 / math.sqrt(identity.face_aspect)
    u = xr / rx
    v = yr / ry

    face = u * u + v * v <= 1.0
    inner_face = u * u + v * v <= 0.78**2

    # skin with sinusoidal texture
    skin = np.array(_hsv_to_rgb(identity.face_hue, 0.45, 0.82))
    texture = 1.0 + 0.10 * np.sin(2.0 * math.pi * identity.skin_texture_freq * (0.25 * u + 0.40 * v))
    img = np.empty((size, size, 3), dtype=np.float64)
    bg = np.array(_hsv_to_rgb(identity.background_hue, 0.40, 0.55))
    img[:] = bg
    img[face] = np.clip(skin[None, :] * texture[face, None], 0.0, 1.0)

    # eyes
    eye_u = identity.eye_spacing
    eye_v = -0.32
    ew = 0.145
    eh = 0.085 + 0.075 * identity.eye_shape
    eyes_region = np.zeros_like(face)
    for sign in (-1.0, 1.0):
        du = u - sign * eye_u
        dv = v - eye_v
        sclera = (du / ew) ** 2 + (dv / eh) ** 2 <= 1.0
        pupil = (du / (0.45 * ew)) ** 2 + (dv / (0.45 * eh)) ** 2 <= 1.0
        region = (du / (ew + 0.04)) ** 2 + (dv / (0.085 + 0.075 + 0.04)) ** 2 <= 1.0
        img[sclera & face] = (0.93, 0.93, 0.90)
        img[pupil & face] = (0.10, 0.09, 0.11)
        eyes_region |= region

    # brows; brow_raise lifts them, region covers the full raise span
    brow_v = eye_v - 0.20 - 0.14 * expr.brow_raise
    brow_region = np.zeros_like(face)
    for sign in (-1.0, 1.0):
        du = np.abs(u - sign * eye_u)
        brow = (du <= 0.17) & (np.abs(v - brow_v) <= 0.035)
        img[brow & face] = (0.16, 0.11, 0.09)
        brow_region |= (du <= 0.20) & (v >= eye_v - 0.20 - 0.14 - 0.065) & (v <= eye_v - 0.20 + 0.065)

    # mouth: curved lip band, openness widens a dark interior
    vm = 0.42
    wm = 0.30
    uu = np.clip(u / wm, -1.0, 1.0)
    vline = vm + 0.15 * identity.mouth_curve * (uu * uu - 0.5)
    span = np.sqrt(np.clip(1.0 - uu * uu, 0.0, 1.0))
    open_h = 0.13 * expr.mouth_open * span
    lip_h = open_h + 0.035 * (1.0 + 0.3 * expr.mouth_open) * span
    within = np.abs(u) <= wm
    dvm = np.abs(v - vline)
    lips = within & (dvm <= lip_h)
    cavity = within & (dvm <= open_h)
    img[lips & face] = (0.55, 0.16, 0.18)
    img[cavity & face] = (0.13, 0.04, 0.06)
    mouth_region = (np.abs(u) <= wm + 0.05) & (np.abs(v - vm) <= 0.075 + 0.13 + 0.05 + 0.05)

    regions = {
        "face": face,
        "inner_face": inner_face,
        "mouth": mouth_region & face,
        "brow": brow_region & face,
        "eyes": eyes_region & face,
    }
    return img.astype(np.float32), regions


def _gaussian_blur(mask, sigma):
    """Separable Gaussian blur of a float mask, zero-padded at the borders."""
    if sigma <= 0:
        return mask.astype(np.float64)
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    out = mask.astype(np.float64)
    padded = np.pad(out, ((radius, radius), (0, 0)))
    out = np.stack([np.convolve(padded[:, j], kernel, mode="valid") for j in range(out.shape[1])], axis=1)
    padded = np.pad(out, ((0, 0), (radius, radius)))
    out = np.stack([np.convolve(padded[i, :], kernel, mode="valid") for i in range(out.shape[0])], axis=0)
    return out


def _blend(target, source, weight):
    # written as target + w*(source-target) so identical inputs stay bit-exact
    return target + weight[..., None] * (source - target)


def _bilinear_warp(img, scale_x, angle, center=(0.5, 0.52)):
    """Sample ``img`` under an inverse affine map (x-scale + rotation about center)."""
    size = img.shape[0]
    coords = (np.arange(size) + 0.5) / size
    x, y = np.meshgrid(coords, coords)
    cx, cy = center
    dx, dy = x - cx, y - cy
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    sx = (cos_a * dx + sin_a * dy) / scale_x
    sy = -sin_a * dx + cos_a * dy
    px = np.clip((sx + cx) * size - 0.5, 0.0, size - 1.0)
    py = np.clip((sy + cy) * size - 0.5, 0.0, size - 1.0)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, size - 1)
    y1 = np.minimum(y0 + 1, size - 1)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(np.float32)


def compose_forgery(source, target, expr_s, expr_t, method, rng, size=64):
    """Compose one fake triplet; the composition family decides how much of the
    source identity survives into the image."""
    if method == "REAL":
        raise ValueError("compose_forgery requires a fake method")
    if method not in FAKE_METHODS:
        raise ValueError(f"unknown method {method!r}")

    source_img = render(source, expr_s, size)
    target_img, regions = render_with_regions(target, expr_t, size)
    inner = regions["inner_face"]
    inner_frac = float(inner.mean())

    if method == "FULL_BLEND":
        alpha = float(rng.uniform(0.45, 0.70))
        weight = alpha * _gaussian_blur(inner.astype(np.float64), 1.0)
        image = _blend(target_img, source_img, weight)
        mix_source = alpha
        mix_target = 1.0 - alpha * inner_frac
    elif method == "FACE_REPLACE":
        sigma = float(rng.uniform(0.5, 2.0))
        weight = _gaussian_blur(inner.astype(np.float64), sigma)
        image = _blend(target_img, source_img, weight)
        mix_source = inner_frac
        mix_target = 1.0 - inner_frac
    elif method == "EXPRESSION_TRANSFER":
        transferred = ExpressionParams(
            mouth_open=expr_s.mouth_open, brow_raise=expr_s.brow_raise, head_tilt=expr_t.head_tilt
        )
        rerender = render(target, transferred, size)
        region = regions["mouth"] | regions["brow"]
        weight = _gaussian_blur(region.astype(np.float64), 0.8)
        image = _blend(target_img, rerender, weight)
        mix_source = float(region.mean())
        mix_target = 1.0 - mix_source
    else:  # GEOMETRY_WARP
        gamma = float(rng.uniform(0.4, 1.0))
        d_aspect = source.face_aspect - target.face_aspect
        d_tilt = expr_s.head_tilt - expr_t.head_tilt
        image = _bilinear_warp(target_img, 1.0 + 0.35 * gamma * d_aspect, gamma * d_tilt)
        magnitude = 0.5 * abs(gamma * d_aspect) / 0.6 + 0.5 * abs(gamma * d_tilt) / 0.4
        mix_source = 0.3 * min(1.0, magnitude)
        mix_target = 1.0 - mix_source

    return SampleTriplet(
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        source_image=source_img,
        target_image=target_img,
        label=1,
        method=method,
        mix_source=float(mix_source),
        mix_target=float(mix_target),
        identity_seeds=(source.seed, target.seed),
    )


def _quantize(img):
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def _save_png(img, path):
    Image.fromarray(_quantize(img), mode="RGB").save(path, format="PNG")


def _load_png(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


@dataclass
class GenConfig:
    out_dir: str
    counts: dict  # (split, method) -> count
    image_size: int = 64
    seed: int = 0
    identity_pool_size: int = 0  # 0 = fresh identity pair per sample


def gen_config_from_flat(cfg, out_dir):
    counts = {}
    for split in ("train", "val", "test"):
        counts[(split, "REAL")] = cfg[f"{split}_real"]
        for method in FAKE_METHODS:
            counts[(split, method)] = cfg[f"{split}_{method.lower()}"]
    return GenConfig(
        out_dir=out_dir,
        counts=counts,
        image_size=cfg["image_size"],
        seed=cfg["seed"],
        identity_pool_size=cfg["identity_pool_size"],
    )


def _pool_identity_seed(split, pool_size, index, rng):
    base = _SPLIT_POOL_BASE[split]
    if pool_size and pool_size > 0:
        return base + int(rng.integers(0, pool_size))
    return base + index


def build_dataset(gen_cfg):
    """Generate images + manifests for all splits; deterministic in (config, seed)."""
    os.makedirs(gen_cfg.out_dir, exist_ok=True)
    manifests = {}
    for split in ("train", "val", "test"):
        split_dir = os.path.join(gen_cfg.out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        records = []
        counter = 0
        id_counter = 0
        for method in METHODS:
            count = gen_cfg.counts.get((split, method), 0)
            for k in range(count):
                sample_id = f"{split}-{counter:06d}"
                rng = np.random.default_rng((gen_cfg.seed, _SPLIT_POOL_BASE[split] + 7, counter))
                triplet = None
                for _attempt in range(20):
                    if method == "REAL":
                        seed = _pool_identity_seed(split, gen_cfg.identity_pool_size, id_counter, rng)
                        identity = identity_from_seed(seed)
                        expr = sample_expression(rng)
                        img = render(identity, expr, gen_cfg.image_size)
                        triplet = SampleTriplet(
                            image=img,
                            source_image=img,
                            target_image=img,
                            label=0,
                            method="REAL",
                            mix_source=1.0,
                            mix_target=1.0,
                            identity_seeds=(seed, seed),
                        )
                        id_counter += 1
                        break
                    seed_s = _pool_identity_seed(split, gen_cfg.identity_pool_size, id_counter, rng)
                    seed_t = _pool_identity_seed(split, gen_cfg.identity_pool_size, id_counter + 1, rng)
                    id_counter += 2
                    if seed_s == seed_t:
                        continue
                    candidate = compose_forgery(
                        identity_from_seed(seed_s),
                        identity_from_seed(seed_t),
                        sample_expression(rng),
                        sample_expression(rng),
                        method,
                        rng,
                        size=gen_cfg.image_size,
                    )
                    qi, qs, qt = map(_quantize, (candidate.image, candidate.source_image, candidate.target_image))
                    if np.array_equal(qi, qs) or np.array_equal(qi, qt):
                        continue  # degenerate composition; redraw
                    triplet = candidate
                    break
                if triplet is None:
                    raise DatasetError(f"could not compose a non-degenerate {method} sample for {sample_id}")
                paths = {
                    "image": os.path.join(split, f"{sample_id}_x.png"),
                    "source": os.path.join(split, f"{sample_id}_src.png"),
                    "target": os.path.join(split, f"{sample_id}_tgt.png"),
                }
                _save_png(triplet.image, os.path.join(gen_cfg.out_dir, paths["image"]))
                _save_png(triplet.source_image, os.path.join(gen_cfg.out_dir, paths["source"]))
                _save_png(triplet.target_image, os.path.join(gen_cfg.out_dir, paths["target"]))
                records.append(
                    {
                        "id": sample_id,
                        "image": paths["image"],
                        "source": paths["source"],
                        "target": paths["target"],
                        "label": triplet.label,
                        "method": triplet.method,
                        "mix_source": triplet.mix_source,
                        "mix_target": triplet.mix_target,
                        "identity_seeds": list(triplet.identity_seeds),
                    }
                )
                counter += 1
        manifest = {
            "split": split,
            "image_size": gen_cfg.image_size,
            "generator_version": GENERATOR_VERSION,
            "rng_seed": gen_cfg.seed,
            "records": records,
        }
        path = os.path.join(gen_cfg.out_dir, f"manifest_{split}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
        manifests[split] = manifest
    return manifests


def manifest_path(data_dir, split):
    return os.path.join(data_dir, f"manifest_{split}.json")


def read_manifest(path):
    if not os.path.exists(path):
        raise DatasetError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    ids = [record["id"] for record in manifest["records"]]
    if len(ids) != len(set(ids)):
        raise DatasetError("duplicate sample ids in manifest")
    return manifest


def load_dataset(path, split=None):
    """Yield SampleTriplets from a manifest, enforcing triplet invariants."""
    manifest = read_manifest(path)
    if split is not None and manifest["split"] != split:
        raise DatasetError(f"manifest split {manifest['split']!r} != requested {split!r}")
    base = os.path.dirname(os.path.abspath(path))
    for record in manifest["records"]:
        arrays = {}
        for key in ("image", "source", "target"):
            file_path = os.path.join(base, record[key])
            if not os.path.exists(file_path):
                raise DatasetError(f"missing file for sample {record['id']}: {record[key]}")
            arrays[key] = _load_png(file_path)
        label = int(record["label"])
        method = record["method"]
        if label == 0:
            if method != "REAL":
                raise DatasetError(f"sample {record['id']}: real label with method {method}")
            if not (
                np.array_equal(arrays["image"], arrays["source"])
                and np.array_equal(arrays["image"], arrays["target"])
            ):
                raise DatasetError(f"sample {record['id']}: real sample with source/target != image")
        else:
            if method == "REAL":
                raise DatasetError(f"sample {record['id']}: fake label with method REAL")
        if not (0.0 <= record["mix_source"] <= 1.0 and 0.0 <= record["mix_target"] <= 1.0):
            raise DatasetError(f"sample {record['id']}: mix scores outside [0, 1]")
        yield SampleTriplet(
            image=arrays["image"],
            source_image=arrays["source"],
            target_image=arrays["target"],
            label=label,
            method=method,
            mix_source=float(record["mix_source"]),
            mix_target=float(record["mix_target"]),
            sample_id=record["id"],
            identity_seeds=tuple(record["identity_seeds"]),
        )


def load_split_arrays(path, split=None, methods=None):
    """Load a split into stacked arrays for training/eval.

    Returns dict with images/sources/targets (N,H,W,3 float32), labels (N,),
    methods (list), ids (list). ``methods`` filters fake families while always
    keeping REAL samples.
    """
    images, sources, targets, labels, names, ids = [], [], [], [], [], []
    for triplet in load_dataset(path, split):
        if methods is not None and triplet.method != "REAL" and triplet.method not in methods:
            continue
        images.append(triplet.image)
        sources.append(triplet.source_image)
        targets.append(triplet.target_image)
        labels.append(triplet.label)
        names.append(triplet.method)
        ids.append(triplet.sample_id)
    if not images:
        raise DatasetError(f"no samples loaded from {path}")
    return {
        "images": np.stack(images),
        "sources": np.stack(sources),
        "targets": np.stack(targets),
        "labels": np.asarray(labels, dtype=np.int64),
        "methods": names,
        "ids": ids,
    }
