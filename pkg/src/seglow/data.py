"""Synthetic segment-world dataset: paired low/normal images with exact segmentation.

Scenes are a background plus randomly placed ellipses and rectangles, one
region per class, each with its own base color (pairwise max-channel distance
at least 0.2) and mild Gaussian texture.  The low-light counterpart applies a
per-image gamma curve and brightness scale plus sensor-like Gaussian noise:

    low = clamp(scale * normal**gamma + N(0, noise_sigma^2), 0, 1)

Images are stored at 16 bits per channel so that 256-bin histogram experiments
are not polluted by storage quantization; both stored images are quantized, so
a saved pair reloads bit-exactly and the degradation is re-derivable from the
per-pair seed recorded in the manifest.

On-disk layout:

    <root>/manifest.txt
    <root>/pairs/<id>.normal   <id>.low   <id>.labels

Each binary file starts with a 16-byte header: magic ``SGLW`` (4 bytes),
format version uint16, payload kind uint8 (1 = uint16 RGB image, 2 = uint8
label map), one reserved byte, then height and width as uint32, all
little-endian.  The payload is the row-major array bytes.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError, InputError

MAGIC = b"SGLW"
FORMAT_VERSION = 1
KIND_IMAGE16 = 1
KIND_LABELS8 = 2

SPLITS = ("train", "val", "test")


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    class_count: int = 4
    texture_sigma: float = 0.02
    color_range: tuple = (0.05, 0.95)  # base colors sampled inside this band

    def validate(self):
        if not (2 <= self.class_count <= 8):
            raise ConfigurationError(f"class_count must be in [2, 8], got {self.class_count}")
        if self.height % 16 or self.width % 16:
            raise ConfigurationError(
                f"scene dims must be divisible by 16, got {self.height}x{self.width}"
            )
        if self.texture_sigma < 0:
            raise ConfigurationError("texture_sigma must be >= 0")
        lo, hi = self.color_range
        if not (0.0 <= lo < hi <= 1.0) or hi - lo < MIN_COLOR_SEPARATION:
            raise ConfigurationError(
                f"color_range must span at least {MIN_COLOR_SEPARATION} inside [0, 1], "
                f"got {self.color_range}"
            )


@dataclass
class DegradeConfig:
    gamma_range: tuple = (2.0, 4.0)
    scale_range: tuple = (0.10, 0.40)
    noise_sigma: float = 0.01

    def validate(self):
        lo, hi = self.gamma_range
        if not (1.5 <= lo <= hi <= 6.0):
            raise ConfigurationError(f"gamma_range must lie within [1.5, 6], got {self.gamma_range}")
        lo, hi = self.scale_range
        if not (0.05 <= lo <= hi <= 0.6):
            raise ConfigurationError(f"scale_range must lie within [0.05, 0.6], got {self.scale_range}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")


@dataclass
class DatasetConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    train: int = 400
    val: int = 50
    test: int = 50
    master_seed: int = 0


@dataclass
class PairMeta:
    seed: int
    gamma: float
    scale: float
    noise_sigma: float
    class_count: int


@dataclass
class ScenePair:
    pair_id: str
    normal: np.ndarray  # (H, W, 3) float64 on the 16-bit grid
    low: np.ndarray
    label_map: np.ndarray  # (H, W) uint8
    meta: PairMeta


MIN_COLOR_SEPARATION = 0.2


def _sample_region_colors(rng, count, color_range=(0.05, 0.95)):
    colors = []
    attempts = 0
    while len(colors) < count:
        cand = rng.uniform(color_range[0], color_range[1], 3)
        if all(np.abs(cand - c).max() >= MIN_COLOR_SEPARATION for c in colors):
            colors.append(cand)
        attempts += 1
        if attempts > 10_000:
            raise ConfigurationError("could not sample separated region colors")
    return np.stack(colors)


def _paint_shapes(rng, h, w, class_count):
    """Label map with every class id present: background 0 plus one shape per class."""
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(100):
        labels = np.zeros((h, w), dtype=np.uint8)
        for cid in range(1, class_count):
            kind = rng.integers(0, 2)
            cy = rng.uniform(0.15 * h, 0.85 * h)
            cx = rng.uniform(0.15 * w, 0.85 * w)
            if kind == 0:  # ellipse
                ry = rng.uniform(0.10 * h, 0.30 * h)
                rx = rng.uniform(0.10 * w, 0.30 * w)
                inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            else:  # rectangle
                ry = rng.uniform(0.08 * h, 0.25 * h)
                rx = rng.uniform(0.08 * w, 0.25 * w)
                inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
            labels[inside] = cid
        if len(np.unique(labels)) == class_count:
            return labels
    raise ConfigurationError("could not place shapes so every class stays visible")


def generate_scene(seed: int, config: SceneConfig):
    """Deterministic scene: (float image in [0,1], uint8 label map)."""
    config.validate()
    rng = np.random.default_rng(seed)
    colors = _sample_region_colors(rng, config.class_count, config.color_range)
    labels = _paint_shapes(rng, config.height, config.width, config.class_count)
    img = colors[labels]
    img = img + rng.normal(0.0, config.texture_sigma, img.shape)
    return np.clip(img, 0.0, 1.0), labels


def degrade_params(seed: int, config: DegradeConfig):
    """The (gamma, scale) pair that ``degrade`` draws for this seed."""
    rng = np.random.default_rng(seed)
    gamma = rng.uniform(*config.gamma_range)
    scale = rng.uniform(*config.scale_range)
    return gamma, scale


def degrade(normal: np.ndarray, seed: int, config: DegradeConfig):
    """Low-light counterpart of a normal-light image, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    gamma = rng.uniform(*config.gamma_range)
    scale = rng.uniform(*config.scale_range)
    noise = rng.normal(0.0, config.noise_sigma, normal.shape) if config.noise_sigma > 0 else 0.0
    return np.clip(scale * np.power(normal, gamma) + noise, 0.0, 1.0)


def quantize16(img):
    return np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)


def dequantize16(raw):
    return raw.astype(np.float64) / 65535.0


def build_pair(pair_id: str, seed: int, config: DatasetConfig) -> ScenePair:
    normal_raw, labels = generate_scene(seed, config.scene)
    normal = dequantize16(quantize16(normal_raw))
    low = dequantize16(quantize16(degrade(normal, seed, config.degrade)))
    gamma, scale = degrade_params(seed, config.degrade)
    meta = PairMeta(
        seed=seed,
        gamma=gamma,
        scale=scale,
        noise_sigma=config.degrade.noise_sigma,
        class_count=config.scene.class_count,
    )
    return ScenePair(pair_id=pair_id, normal=normal, low=low, label_map=labels, meta=meta)


@dataclass
class Dataset:
    config: DatasetConfig
    pairs: dict  # split -> list[ScenePair]

    def split(self, name):
        if name not in self.pairs:
            raise InputError(f"unknown split: {name}")
        return self.pairs[name]

    @property
    def num_classes(self):
        return self.config.scene.class_count


def build_dataset(config: DatasetConfig) -> Dataset:
    """Generate all pairs from the master seed; pair seeds are stable and recorded."""
    config.scene.validate()
    config.degrade.validate()
    seed_rng = np.random.default_rng(config.master_seed)
    pairs = {}
    counter = 0
    for split, count in (("train", config.train), ("val", config.val), ("test", config.test)):
        bucket = []
        for _ in range(count):
            seed = int(seed_rng.integers(0, 2**31 - 1))
            bucket.append(build_pair(f"{split}{counter:05d}", seed, config))
            counter += 1
        pairs[split] = bucket
    return Dataset(config=config, pairs=pairs)


# ------------------------------------------------------------------ persistence


def _write_array(path: Path, kind: int, arr: np.ndarray):
    h, w = arr.shape[:2]
    header = (
        MAGIC
        + FORMAT_VERSION.to_bytes(2, "little")
        + kind.to_bytes(1, "little")
        + b"\x00"
        + h.to_bytes(4, "little")
        + w.to_bytes(4, "little")
    )
    assert len(header) == 16
    path.write_bytes(header + arr.tobytes())


def _read_array(path: Path):
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise DataFormatError(f"{path}: missing or corrupt header")
    version = int.from_bytes(blob[4:6], "little")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    kind = blob[6]
    h = int.from_bytes(blob[8:12], "little")
    w = int.from_bytes(blob[12:16], "little")
    payload = blob[16:]
    if kind == KIND_IMAGE16:
        expect = h * w * 3 * 2
        if len(payload) != expect:
            raise DataFormatError(f"{path}: truncated image payload ({len(payload)} of {expect} bytes)")
        return np.frombuffer(payload, dtype="<u2").reshape(h, w, 3), kind
    if kind == KIND_LABELS8:
        expect = h * w
        if len(payload) != expect:
            raise DataFormatError(f"{path}: truncated label payload ({len(payload)} of {expect} bytes)")
        return np.frombuffer(payload, dtype=np.uint8).reshape(h, w), kind
    raise DataFormatError(f"{path}: unknown payload kind {kind}")


def save_dataset(root, dataset: Dataset):
    root = Path(root)
    (root / "pairs").mkdir(parents=True, exist_ok=True)
    cfg = dataset.config
    lines = [
        f"format_version {FORMAT_VERSION}",
        f"master_seed {cfg.master_seed}",
        f"height {cfg.scene.height}",
        f"width {cfg.scene.width}",
        f"class_count {cfg.scene.class_count}",
        f"texture_sigma {cfg.scene.texture_sigma!r}",
        f"color_range {cfg.scene.color_range[0]!r} {cfg.scene.color_range[1]!r}",
        f"gamma_range {cfg.degrade.gamma_range[0]!r} {cfg.degrade.gamma_range[1]!r}",
        f"scale_range {cfg.degrade.scale_range[0]!r} {cfg.degrade.scale_range[1]!r}",
        f"noise_sigma {cfg.degrade.noise_sigma!r}",
    ]
    for split in SPLITS:
        for pair in dataset.pairs.get(split, []):
            lines.append(
                f"pair {pair.pair_id} {split} {pair.meta.seed} {pair.meta.gamma!r} {pair.meta.scale!r}"
            )
            _write_array(root / "pairs" / f"{pair.pair_id}.normal", KIND_IMAGE16, quantize16(pair.normal))
            _write_array(root / "pairs" / f"{pair.pair_id}.low", KIND_IMAGE16, quantize16(pair.low))
            _write_array(root / "pairs" / f"{pair.pair_id}.labels", KIND_LABELS8, pair.label_map)
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    return root


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise InputError(f"no manifest.txt under {root}")
    header = {}
    rows = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "pair":
            if len(parts) != 6:
                raise DataFormatError(f"{manifest}:{lineno}: malformed pair line")
            rows.append(parts[1:])
        else:
            header[parts[0]] = parts[1:]
    version = int(header.get("format_version", ["-1"])[0])
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{manifest}: unsupported format version {version}")

    color_range = header.get("color_range", ["0.05", "0.95"])
    scene = SceneConfig(
        height=int(header["height"][0]),
        width=int(header["width"][0]),
        class_count=int(header["class_count"][0]),
        texture_sigma=float(header["texture_sigma"][0]),
        color_range=(float(color_range[0]), float(color_range[1])),
    )
    deg = DegradeConfig(
        gamma_range=(float(header["gamma_range"][0]), float(header["gamma_range"][1])),
        scale_range=(float(header["scale_range"][0]), float(header["scale_range"][1])),
        noise_sigma=float(header["noise_sigma"][0]),
    )
    pairs = {s: [] for s in SPLITS}
    counts = {s: 0 for s in SPLITS}
    for pair_id, split, seed, gamma, scale in rows:
        if split not in SPLITS:
            raise DataFormatError(f"{manifest}: unknown split '{split}' for pair {pair_id}")
        normal, kind = _read_array(root / "pairs" / f"{pair_id}.normal")
        if kind != KIND_IMAGE16:
            raise DataFormatError(f"{pair_id}.normal: expected a 16-bit image payload")
        low, kind = _read_array(root / "pairs" / f"{pair_id}.low")
        if kind != KIND_IMAGE16:
            raise DataFormatError(f"{pair_id}.low: expected a 16-bit image payload")
        labels, kind = _read_array(root / "pairs" / f"{pair_id}.labels")
        if kind != KIND_LABELS8:
            raise DataFormatError(f"{pair_id}.labels: expected a label payload")
        meta = PairMeta(
            seed=int(seed),
            gamma=float(gamma),
            scale=float(scale),
            noise_sigma=deg.noise_sigma,
            class_count=scene.class_count,
        )
        pairs[split].append(
            ScenePair(
                pair_id=pair_id,
                normal=dequantize16(normal),
                low=dequantize16(low),
                label_map=labels.copy(),
                meta=meta,
            )
        )
        counts[split] += 1
    config = DatasetConfig(
        scene=scene,
        degrade=deg,
        train=counts["train"],
        val=counts["val"],
        test=counts["test"],
        master_seed=int(header.get("master_seed", ["0"])[0]),
    )
    return Dataset(config=config, pairs=pairs)


def import_pairs(records, root, scene_config: SceneConfig, degrade_config: DegradeConfig | None = None):
    """Importer for externally supplied (normal, low, labels) arrays.

    ``records`` is an iterable of (pair_id, split, normal, low, labels) with
    float images in [0, 1] and integer label maps.  Written in the native
    layout; imported pairs carry seed -1 (degradation not re-derivable).
    """
    scene_config.validate()
    pairs = {s: [] for s in SPLITS}
    for pair_id, split, normal, low, labels in records:
        if split not in SPLITS:
            raise InputError(f"unknown split: {split}")
        normal = np.asarray(normal, dtype=np.float64)
        low = np.asarray(low, dtype=np.float64)
        labels = np.asarray(labels).astype(np.uint8)
        if normal.shape != low.shape or normal.shape[:2] != labels.shape:
            raise InputError(f"pair {pair_id}: mismatched array shapes")
        if normal.shape[:2] != (scene_config.height, scene_config.width):
            raise InputError(f"pair {pair_id}: dims do not match the dataset config")
        meta = PairMeta(
            seed=-1,
            gamma=float("nan"),
            scale=float("nan"),
            noise_sigma=0.0,
            class_count=scene_config.class_count,
        )
        pairs[split].append(
            ScenePair(
                pair_id=pair_id,
                normal=dequantize16(quantize16(normal)),
                low=dequantize16(quantize16(low)),
                label_map=labels,
                meta=meta,
            )
        )
    config = DatasetConfig(
        scene=scene_config,
        degrade=degrade_config or DegradeConfig(),
        train=len(pairs["train"]),
        val=len(pairs["val"]),
        test=len(pairs["test"]),
        master_seed=-1,
    )
    ds = Dataset(config=config, pairs=pairs)
    return save_dataset(root, ds)
