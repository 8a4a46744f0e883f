"""Corpus assembly: on-disk layout, manifests, splits, and ingestion.

Layout: ``root/<style_id>/<char_id>.png`` plus a ``manifest.json`` recording
character/style inventories, seen/unseen splits, and (for synthetic corpora)
the full generating specs. Images are 8-bit grayscale PNGs; in-memory pixel
values round-trip through disk exactly at 8-bit resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import StateError, ValidationError
from .render import VALID_SIZES, GlyphImage, render_glyph
from .specs import (
    GlyphSpec,
    StyleSpec,
    canonical_style,
    random_glyph_spec,
    random_style_spec,
    seeded_rng,
    spec_from_dict,
    spec_to_dict,
    style_from_dict,
    style_to_dict,
)

MANIFEST_NAME = "manifest.json"


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    """Write a [0, 1] float image as an 8-bit grayscale PNG."""
    arr = np.asarray(pixels, dtype=np.float64)
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q, mode="L").save(path)


def load_image(path: str | Path) -> np.ndarray:
    """Read a grayscale PNG back into float32 [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return arr / np.float32(255.0)


@dataclass(frozen=True)
class SplitRatios:
    """Seen/unseen fractions per axis; each axis must sum to one."""

    seen_chars: float = 0.8
    unseen_chars: float = 0.2
    seen_styles: float = 0.6
    unseen_styles: float = 0.4

    def __post_init__(self) -> None:
        for name in ("seen_chars", "unseen_chars", "seen_styles", "unseen_styles"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValidationError(f"{name} must lie strictly inside (0, 1), got {value}")
        if abs(self.seen_chars + self.unseen_chars - 1.0) > 1e-9:
            raise ValidationError(
                f"char ratios must sum to 1, got {self.seen_chars} + {self.unseen_chars}"
            )
        if abs(self.seen_styles + self.unseen_styles - 1.0) > 1e-9:
            raise ValidationError(
                f"style ratios must sum to 1, got {self.seen_styles} + {self.unseen_styles}"
            )


@dataclass
class DatasetManifest:
    """Inventory and split bookkeeping for one corpus directory."""

    size: int
    seed: int
    canonical_style_id: int
    char_ids: list[int]
    style_ids: list[int]
    seen_chars: list[int]
    unseen_chars: list[int]
    seen_styles: list[int]
    unseen_styles: list[int]
    char_specs: dict[int, GlyphSpec] | None = None
    style_specs: dict[int, StyleSpec] | None = None
    root: Path | None = None

    def validate(self) -> None:
        if self.size not in VALID_SIZES:
            raise ValidationError(f"manifest size must be one of {VALID_SIZES}, got {self.size}")
        if sorted(self.seen_chars + self.unseen_chars) != sorted(self.char_ids):
            raise ValidationError("char splits must partition char_ids")
        non_canonical = [s for s in self.style_ids if s != self.canonical_style_id]
        if sorted(self.seen_styles + self.unseen_styles) != sorted(non_canonical):
            raise ValidationError("style splits must partition the non-canonical styles")
        if self.canonical_style_id not in self.style_ids:
            raise ValidationError(f"canonical style {self.canonical_style_id} not in style_ids")
        if self.canonical_style_id in self.seen_styles or self.canonical_style_id in self.unseen_styles:
            raise ValidationError("canonical style must sit outside both style splits")
        for name in ("seen_chars", "unseen_chars", "seen_styles", "unseen_styles"):
            if len(getattr(self, name)) == 0:
                raise ValidationError(f"{name} split is empty")

    def target_styles(self) -> list[int]:
        """Every style a generated glyph may be asked to wear (never canonical)."""
        return sorted(self.seen_styles + self.unseen_styles)

    def image_path(self, style_id: int, char_id: int) -> Path:
        if self.root is None:
            raise StateError("manifest has no root directory; save or load it first")
        return Path(self.root) / str(style_id) / f"{char_id}.png"

    def to_dict(self) -> dict:
        data = {
            "size": self.size,
            "seed": self.seed,
            "canonical_style_id": self.canonical_style_id,
            "char_ids": list(self.char_ids),
            "style_ids": list(self.style_ids),
            "seen_chars": list(self.seen_chars),
            "unseen_chars": list(self.unseen_chars),
            "seen_styles": list(self.seen_styles),
            "unseen_styles": list(self.unseen_styles),
            "char_specs": None,
            "style_specs": None,
        }
        if self.char_specs is not None:
            data["char_specs"] = [spec_to_dict(s) for _, s in sorted(self.char_specs.items())]
        if self.style_specs is not None:
            data["style_specs"] = [style_to_dict(s) for _, s in sorted(self.style_specs.items())]
        return data

    def save(self, root: str | Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        (root / MANIFEST_NAME).write_text(payload)
        self.root = root

    @classmethod
    def load(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.exists():
            raise StateError(f"no {MANIFEST_NAME} under {root}")
        data = json.loads(path.read_text())
        char_specs = None
        if data.get("char_specs"):
            char_specs = {d["char_id"]: spec_from_dict(d) for d in data["char_specs"]}
        style_specs = None
        if data.get("style_specs"):
            style_specs = {d["style_id"]: style_from_dict(d) for d in data["style_specs"]}
        manifest = cls(
            size=int(data["size"]),
            seed=int(data["seed"]),
            canonical_style_id=int(data["canonical_style_id"]),
            char_ids=[int(v) for v in data["char_ids"]],
            style_ids=[int(v) for v in data["style_ids"]],
            seen_chars=[int(v) for v in data["seen_chars"]],
            unseen_chars=[int(v) for v in data["unseen_chars"]],
            seen_styles=[int(v) for v in data["seen_styles"]],
            unseen_styles=[int(v) for v in data["unseen_styles"]],
            char_specs=char_specs,
            style_specs=style_specs,
            root=root,
        )
        manifest.validate()
        return manifest


def _split_ids(ids: list[int], seen_fraction: float, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    # Both halves must stay non-empty, so the rounded count is clamped.
    if len(ids) < 2:
        raise ValidationError(f"need at least 2 ids to split, got {len(ids)}")
    perm = [ids[int(i)] for i in rng.permutation(len(ids))]
    n_seen = min(max(int(round(seen_fraction * len(ids))), 1), len(ids) - 1)
    return sorted(perm[:n_seen]), sorted(perm[n_seen:])


def build_dataset(
    out_root: str | Path,
    num_chars: int,
    num_styles: int,
    size: int = 64,
    ratios: SplitRatios | None = None,
    seed: int = 0,
) -> DatasetManifest:
    """Render a full synthetic corpus (every char x every style) to disk.

    Style 0 is the canonical source style; the remaining num_styles - 1
    styles are split seen/unseen by ``ratios``. Deterministic in ``seed``:
    the same arguments reproduce byte-identical files.
    """
    if num_chars < 2:
        raise ValidationError(f"num_chars must be >= 2, got {num_chars}")
    if num_styles < 3:
        raise ValidationError(
            f"num_styles must be >= 3 (canonical + >=1 seen + >=1 unseen), got {num_styles}"
        )
    ratios = ratios or SplitRatios()
    out_root = Path(out_root)

    rng = seeded_rng(seed, 4)
    char_ids = list(range(num_chars))
    style_ids = list(range(num_styles))
    seen_chars, unseen_chars = _split_ids(char_ids, ratios.seen_chars, rng)
    seen_styles, unseen_styles = _split_ids(style_ids[1:], ratios.seen_styles, rng)

    char_specs = {cid: random_glyph_spec(cid, seed) for cid in char_ids}
    style_specs: dict[int, StyleSpec] = {0: canonical_style(0)}
    for sid in style_ids[1:]:
        style_specs[sid] = random_style_spec(sid, seed)

    for sid in style_ids:
        for cid in char_ids:
            glyph = render_glyph(char_specs[cid], style_specs[sid], size)
            save_image(glyph.pixels, out_root / str(sid) / f"{cid}.png")

    manifest = DatasetManifest(
        size=size,
        seed=seed,
        canonical_style_id=0,
        char_ids=char_ids,
        style_ids=style_ids,
        seen_chars=seen_chars,
        unseen_chars=unseen_chars,
        seen_styles=seen_styles,
        unseen_styles=unseen_styles,
        char_specs=char_specs,
        style_specs=style_specs,
    )
    manifest.validate()
    manifest.save(out_root)
    return manifest


def ingest_dataset(
    src_root: str | Path,
    out_root: str | Path,
    canonical_style_id: int,
    size: int = 64,
    ratios: SplitRatios | None = None,
    seed: int = 0,
) -> DatasetManifest:
    """Normalize an external ``<style>/<char>.png`` tree into a corpus.

    Directory and file names must be integer ids and every style must cover
    the same character set. Images are converted to grayscale, resized to
    ``size``, and re-saved under ``out_root`` with a fresh manifest.
    """
    src_root = Path(src_root)
    out_root = Path(out_root)
    if size not in VALID_SIZES:
        raise ValidationError(f"size must be one of {VALID_SIZES}, got {size}")
    if not src_root.is_dir():
        raise ValidationError(f"{src_root} is not a directory")
    ratios = ratios or SplitRatios()

    styles: dict[int, dict[int, Path]] = {}
    for entry in sorted(src_root.iterdir()):
        if not entry.is_dir():
            continue
        try:
            sid = int(entry.name)
        except ValueError as exc:
            raise ValidationError(f"style directory {entry.name!r} is not an integer id") from exc
        chars: dict[int, Path] = {}
        for png in sorted(entry.glob("*.png")):
            try:
                cid = int(png.stem)
            except ValueError as exc:
                raise ValidationError(f"image name {png.name!r} is not an integer char id") from exc
            chars[cid] = png
        if not chars:
            raise ValidationError(f"style directory {entry} holds no .png files")
        styles[sid] = chars

    if len(styles) < 3:
        raise ValidationError(f"need at least 3 style directories, found {len(styles)}")
    if canonical_style_id not in styles:
        raise ValidationError(f"canonical style {canonical_style_id} not present in {src_root}")
    char_sets = {sid: frozenset(chars) for sid, chars in styles.items()}
    reference = char_sets[canonical_style_id]
    for sid, chars in char_sets.items():
        if chars != reference:
            raise ValidationError(
                f"style {sid} covers chars {sorted(chars)} but canonical covers {sorted(reference)}"
            )

    for sid, chars in styles.items():
        for cid, path in chars.items():
            with Image.open(path) as im:
                resized = im.convert("L").resize((size, size), Image.BILINEAR)
            arr = np.asarray(resized, dtype=np.float32) / np.float32(255.0)
            save_image(arr, out_root / str(sid) / f"{cid}.png")

    rng = seeded_rng(seed, 5)
    char_ids = sorted(reference)
    style_ids = sorted(styles)
    seen_chars, unseen_chars = _split_ids(char_ids, ratios.seen_chars, rng)
    non_canonical = [s for s in style_ids if s != canonical_style_id]
    seen_styles, unseen_styles = _split_ids(non_canonical, ratios.seen_styles, rng)

    manifest = DatasetManifest(
        size=size,
        seed=seed,
        canonical_style_id=canonical_style_id,
        char_ids=char_ids,
        style_ids=style_ids,
        seen_chars=seen_chars,
        unseen_chars=unseen_chars,
        seen_styles=seen_styles,
        unseen_styles=unseen_styles,
    )
    manifest.validate()
    manifest.save(out_root)
    return manifest


class GlyphCorpus:
    """A manifest plus all of its images preloaded into memory."""

    def __init__(self, manifest: DatasetManifest, images: dict[tuple[int, int], np.ndarray]):
        self.manifest = manifest
        self._images = images

    @classmethod
    def load(cls, root: str | Path) -> "GlyphCorpus":
        manifest = DatasetManifest.load(root)
        images: dict[tuple[int, int], np.ndarray] = {}
        for sid in manifest.style_ids:
            for cid in manifest.char_ids:
                path = manifest.image_path(sid, cid)
                if not path.exists():
                    raise StateError(f"manifest promises {path} but the file is missing")
                images[(sid, cid)] = load_image(path)
        return cls(manifest, images)

    def image(self, style_id: int, char_id: int) -> np.ndarray:
        key = (style_id, char_id)
        if key not in self._images:
            raise ValidationError(f"no image for style {style_id}, char {char_id}")
        return self._images[key]

    def glyph(self, style_id: int, char_id: int) -> GlyphImage:
        return GlyphImage(pixels=self.image(style_id, char_id), char_id=char_id, style_id=style_id)

    @property
    def size(self) -> int:
        return self.manifest.size
