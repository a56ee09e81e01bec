"""Synthetic lesion data, splits, file I/O and the 2N augmented training set.

On disk a dataset is a directory of binary PGM files plus a JSON-lines
manifest, one object per sample::

    {"height": 64, "id": "s0007", "image": "images/s0007.pgm",
     "mask": "masks/s0007.pgm", "provenance": {"kind": "original"},
     "split": "train", "width": 64, "window": null}

Paths are relative to the manifest's directory. Augmented samples carry
``{"kind": "augmented", "source": <original id>, "steps": [...]}`` where each
step is ``{"action": "RT", "seed": 123}`` (optionally with ``"degrees"`` for
a rotation whose angle differs from the default). Replaying the steps
through :func:`rlaug.imgops.apply_action` from the source sample reproduces
the augmented pixels exactly.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractViolation, ParseError
from .imgops import DEFAULT_PARAMS, Action, apply_action

SPLITS = ("train", "val", "test")
# phases allowed to read test records from a manifest
TEST_READERS = frozenset({"train-final", "eval", "report"})

DIFFICULTY = {
    "easy": {"offset": 0.5, "noise": 0.02},
    "hard": {"offset": 0.15, "noise": 0.08},
}


@dataclass
class Sample:
    id: str
    image: np.ndarray
    mask: np.ndarray
    split: str = "train"
    provenance: dict = field(default_factory=lambda: {"kind": "original"})

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ContractViolation(
                f"sample {self.id}: image {self.image.shape} != mask {self.mask.shape}")

    @property
    def source_id(self):
        return self.provenance.get("source", self.id)

    def pair(self):
        return self.image, self.mask


# -- generation -------------------------------------------------------------

def ellipse_mask(size, cx, cy, a, b, angle):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    u = (xs - cx) * np.cos(angle) + (ys - cy) * np.sin(angle)
    v = -(xs - cx) * np.sin(angle) + (ys - cy) * np.cos(angle)
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.uint8)


def _texture(rng, size, amplitude=0.06, waves=3):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    tex = np.zeros((size, size))
    for _ in range(waves):
        fx, fy = rng.uniform(-2.0, 2.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        tex += np.cos(2 * np.pi * (fx * xs + fy * ys) + phase)
    return amplitude * tex / waves


def gen_synthetic(count, size=64, difficulty="easy", seed=0):
    """``count`` images of textured background with one elliptical lesion each."""
    if count < 1:
        raise ContractViolation(f"count must be >= 1, got {count}")
    if size % 2 or size < 4:
        raise ContractViolation(f"size must be an even number >= 4, got {size}")
    if difficulty not in DIFFICULTY:
        raise ContractViolation(f"difficulty must be one of {sorted(DIFFICULTY)}")
    knobs = DIFFICULTY[difficulty]
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        a, b = rng.uniform(0.05 * size, 0.15 * size, 2)
        angle = rng.uniform(0, np.pi)
        margin = max(a, b) + 1.0
        cx, cy = rng.uniform(margin, size - 1 - margin, 2)
        mask = ellipse_mask(size, cx, cy, a, b, angle)
        base = rng.uniform(0.25, 0.35)
        image = base + _texture(rng, size) + knobs["offset"] * mask
        image = image + rng.normal(0.0, knobs["noise"], (size, size))
        samples.append(Sample(f"s{i:04d}", np.clip(image, 0.0, 1.0), mask))
    return samples


def split(dataset, counts=(50, 5, 13), seed=0):
    """Seeded permutation, then consecutive train / val / test blocks."""
    n_train, n_val, n_test = counts
    if min(counts) < 0 or sum(counts) > len(dataset):
        raise ContractViolation(f"split counts {counts} exceed dataset size {len(dataset)}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    bounds = np.cumsum([0, n_train, n_val, n_test])
    parts = []
    for name, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        parts.append([replace(dataset[j], split=name) for j in order[lo:hi]])
    return tuple(parts)


# -- provenance -------------------------------------------------------------

def replay_steps(image, mask, steps, params=DEFAULT_PARAMS):
    for step in steps:
        p = params
        if "degrees" in step:
            p = replace(params, rotate_degrees=float(step["degrees"]))
        image, mask, _ = apply_action(image, mask, Action[step["action"]], step.get("seed", 0), p)
    return image, mask


def augmented_sample(original, steps, image, mask):
    prov = {"kind": "augmented", "source": original.id, "steps": list(steps)}
    return Sample(f"{original.id}_aug", image, mask, original.split, prov)


def build_augmented_set(train, augmented):
    """Interleave each original with its single augmented counterpart (size 2N)."""
    by_source = {}
    for s in augmented:
        if s.provenance.get("kind") != "augmented":
            raise ContractViolation(f"{s.id} is not an augmented sample")
        if s.provenance["source"] in by_source:
            raise ContractViolation(f"two augmented samples for {s.provenance['source']}")
        by_source[s.provenance["source"]] = s
    out = []
    for orig in train:
        if orig.split != "train":
            raise ContractViolation(f"{orig.id} is a {orig.split} sample, not train")
        if orig.id not in by_source:
            raise ContractViolation(f"no augmented counterpart for {orig.id}")
        out.extend([orig, by_source.pop(orig.id)])
    if by_source:
        raise ContractViolation(f"augmented samples without an original: {sorted(by_source)}")
    return out


# -- PGM --------------------------------------------------------------------

def image_to_bytes(image):
    return np.clip(np.floor(np.asarray(image) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def read_pgm(path):
    """Parse a binary (P5) 8-bit PGM into a uint8 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] != b"P5":
        raise ParseError(path, 0, "missing P5 magic")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(buf):
            raise ParseError(path, pos, "truncated header")
        ch = buf[pos:pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            pos = len(buf) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(buf) and buf[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(buf[start:pos]))
        else:
            raise ParseError(path, pos, f"unexpected byte {ch!r} in header")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ParseError(path, pos, "header must end with one whitespace byte")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ParseError(path, pos, f"bad dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise ParseError(path, pos, f"maxval {maxval} not supported (8-bit only)")
    need = width * height
    if len(buf) - pos < need:
        raise ParseError(path, len(buf), f"truncated pixel data: need {need} bytes from offset {pos}")
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(height, width)
    if maxval != 255:
        data = np.floor(data.astype(np.float64) * 255.0 / maxval + 0.5).astype(np.uint8)
    return data


# -- manifest ---------------------------------------------------------------

def write_dataset(directory, samples, manifest_name="manifest.jsonl"):
    """Write PGMs under ``directory`` and a manifest listing them; returns the manifest path."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        img_rel = f"images/{s.id}.pgm"
        mask_rel = f"masks/{s.id}.pgm"
        write_pgm(directory / img_rel, image_to_bytes(s.image))
        write_pgm(directory / mask_rel, np.asarray(s.mask, dtype=np.uint8) * 255)
        rec = {"id": s.id, "split": s.split, "image": img_rel, "mask": mask_rel,
               "height": int(s.image.shape[0]), "width": int(s.image.shape[1]),
               "provenance": s.provenance, "window": None}
        lines.append(json.dumps(rec, sort_keys=True))
    path = directory / manifest_name
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest_records(path):
    path = Path(path)
    records = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.strip()
            if line:
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ParseError(path, offset + exc.pos, f"bad JSON: {exc.msg}") from None
            offset += len(raw)
    return records


def load_manifest(path, splits=SPLITS, phase=None):
    """Load samples of the requested splits.

    Test records are only handed to the phases in TEST_READERS; asking for
    them from anywhere else is a contract violation.
    """
    if "test" in splits and phase not in TEST_READERS:
        raise ContractViolation(f"phase {phase!r} may not read the test split")
    path = Path(path)
    base = path.parent
    out = []
    for rec in read_manifest_records(path):
        if rec["split"] not in splits:
            continue
        img_path = base / rec["image"]
        mask_path = base / rec["mask"]
        img = read_pgm(img_path)
        mask = read_pgm(mask_path)
        expected = (rec["height"], rec["width"])
        for arr, p in ((img, img_path), (mask, mask_path)):
            if arr.shape != expected:
                raise ParseError(p, 0, f"dimensions {arr.shape} disagree with manifest {expected}")
        if not np.isin(mask, (0, 255)).all():
            raise ParseError(mask_path, 0, "mask values must be 0 or 255")
        out.append(Sample(rec["id"], img.astype(np.float64) / 255.0, (mask // 255).astype(np.uint8),
                          rec["split"], rec.get("provenance", {"kind": "original"})))
    return out

