"""Batch orchestration: stage graph, deterministic seeding, manifest.

A run loads every image in the input directory, applies the configured
enhancement stages (IEM, stabilization, sharpening) in float space with one
final quantization, then emits augmented variants for each geometric stage
whose per-image coin flip fires.  Randomness is derived per image from
(seed, file name), so results are identical for any worker count and
traversal order.  Augmented variants are written as additional suffixed
files; originals are never replaced.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import annotations as ann_mod
from .augment import TransformRecord, broken_mirror, crop, hflip, sharpen, transform_box
from .detmetrics import image_stats
from .iem import IemConfig, enhance
from .imagecore import load_image, save_image, to_float, to_u8
from .stabilize import stabilize

ENHANCE_STAGES = ("iem", "stabilize", "sharpen")
GEOMETRIC_STAGES = ("hflip", "broken_mirror", "crop")
KNOWN_STAGES = ENHANCE_STAGES + GEOMETRIC_STAGES

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class PipelineError(Exception):
    """Raised for configuration and input-level problems."""


@dataclass
class PipelineConfig:
    """Everything a run needs; serialized verbatim into the manifest."""

    input_dir: str
    output_dir: str
    annotations_in: str | None = None
    annotations_out: str | None = None
    stages: list[str] = field(default_factory=lambda: ["iem", "stabilize", "sharpen"])
    iem: IemConfig = field(default_factory=IemConfig)
    stabilize_restretch: bool = True
    sharpen_sigma: float = 1.0
    sharpen_amount: float = 1.5
    hflip_prob: float = 0.5
    broken_mirror_prob: float = 0.25
    crop_prob: float = 0.25
    crop_min_frac: float = 0.5
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.stages:
            raise PipelineError("stage list must not be empty")
        if len(set(self.stages)) != len(self.stages):
            raise PipelineError(f"duplicate stages in {self.stages}")
        unknown = [s for s in self.stages if s not in KNOWN_STAGES]
        if unknown:
            raise PipelineError(f"unknown stages {unknown}; valid: {list(KNOWN_STAGES)}")
        for name in ("hflip_prob", "broken_mirror_prob", "crop_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise PipelineError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 < self.crop_min_frac <= 1.0:
            raise PipelineError(f"crop_min_frac must be in (0, 1], got {self.crop_min_frac}")
        if self.workers < 1:
            raise PipelineError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2**64:
            raise PipelineError(f"seed must be an unsigned 64-bit value, got {self.seed}")
        if self.annotations_out and not self.annotations_in:
            raise PipelineError("annotations_out requires annotations_in")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        known = {
            "input_dir", "output_dir", "annotations_in", "annotations_out",
            "stages", "iem", "stabilize", "sharpen", "augment", "seed", "workers",
        }
        unknown = set(data) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in ("input_dir", "output_dir", "annotations_in", "annotations_out",
                    "stages", "seed", "workers"):
            if key in data:
                kwargs[key] = data[key]
        if "input_dir" not in kwargs or "output_dir" not in kwargs:
            raise PipelineError("config requires input_dir and output_dir")
        try:
            if "iem" in data:
                kwargs["iem"] = IemConfig(**data["iem"])
        except (TypeError, ValueError) as exc:
            raise PipelineError(f"bad iem config: {exc}") from exc
        stab = data.get("stabilize", {})
        if "restretch" in stab:
            kwargs["stabilize_restretch"] = bool(stab["restretch"])
        sharpen_cfg = data.get("sharpen", {})
        if "sigma" in sharpen_cfg:
            kwargs["sharpen_sigma"] = float(sharpen_cfg["sigma"])
        if "amount" in sharpen_cfg:
            kwargs["sharpen_amount"] = float(sharpen_cfg["amount"])
        aug = data.get("augment", {})
        for src, dst in (
            ("hflip_prob", "hflip_prob"),
            ("broken_mirror_prob", "broken_mirror_prob"),
            ("crop_prob", "crop_prob"),
            ("crop_min_frac", "crop_min_frac"),
        ):
            if src in aug:
                kwargs[dst] = float(aug[src])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError(f"{path}: cannot read config: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "input_dir": self.input_dir,
            "output_dir": self.output_dir,
            "annotations_in": self.annotations_in,
            "annotations_out": self.annotations_out,
            "stages": list(self.stages),
            "iem": {
                "p_low": self.iem.p_low,
                "p_high": self.iem.p_high,
                "rgb_prestretch": self.iem.rgb_prestretch,
                "ab_base": self.iem.ab_base,
                "ab_range": self.iem.ab_range,
            },
            "stabilize": {"restretch": self.stabilize_restretch},
            "sharpen": {"sigma": self.sharpen_sigma, "amount": self.sharpen_amount},
            "augment": {
                "hflip_prob": self.hflip_prob,
                "broken_mirror_prob": self.broken_mirror_prob,
                "crop_prob": self.crop_prob,
                "crop_min_frac": self.crop_min_frac,
            },
            "seed": self.seed,
            "workers": self.workers,
        }


@dataclass
class Manifest:
    """One record per emitted image plus run-level aggregates."""

    config: dict
    seed: int
    records: list[dict]
    failures: list[dict]
    summary: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "summary": self.summary,
            "records": self.records,
            "failures": self.failures,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def image_rng(seed: int, file_name: str) -> np.random.Generator:
    """Per-image generator derived from (run seed, file name).

    Hash-based derivation keeps draws independent of worker count and
    traversal order.
    """
    digest = hashlib.blake2b(
        f"{seed}:{file_name}".encode("utf-8"), digest_size=8
    ).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def _draw_crop_rect(rng: np.random.Generator, width: int, height: int, min_frac: float):
    cw = max(1, int(round(width * float(rng.uniform(min_frac, 1.0)))))
    ch = max(1, int(round(height * float(rng.uniform(min_frac, 1.0)))))
    cx = int(rng.integers(0, width - cw + 1))
    cy = int(rng.integers(0, height - ch + 1))
    return (cx, cy, cw, ch)


def _process_one(config: PipelineConfig, file_name: str) -> dict:
    """Process a single source image; returns a serializable result dict."""
    try:
        src = Path(config.input_dir) / file_name
        out_dir = Path(config.output_dir)
        raw = load_image(src)
        x = to_float(raw)
        before = image_stats(x).dispersion

        stab_report = None
        for stage in config.stages:
            if stage == "iem":
                x = enhance(x, config.iem)
            elif stage == "stabilize":
                x, stab_report = stabilize(x, restretch=config.stabilize_restretch)
            elif stage == "sharpen":
                x = sharpen(x, sigma=config.sharpen_sigma, amount=config.sharpen_amount)
        after = image_stats(x).dispersion
        base = to_u8(x)

        stem = Path(file_name).stem
        height, width = base.shape[:2]
        enh_applied = [s for s in config.stages if s in ENHANCE_STAGES]

        rng = image_rng(config.seed, file_name)
        outputs = []
        base_rec = TransformRecord(kind="none", image_width=width, image_height=height)
        outputs.append((f"{stem}.png", base, enh_applied, base_rec))
        for stage in config.stages:
            if stage not in GEOMETRIC_STAGES:
                continue
            prob = getattr(config, f"{stage}_prob")
            if rng.random() >= prob:
                continue
            if stage == "hflip":
                variant, rec = hflip(base)
            elif stage == "broken_mirror":
                split = int(rng.integers(0, width + 1))
                variant, rec = broken_mirror(base, split)
            else:
                rect = _draw_crop_rect(rng, width, height, config.crop_min_frac)
                variant, rec = crop(base, rect)
            outputs.append((f"{stem}_{stage}.png", variant, enh_applied + [stage], rec))

        entries = []
        for out_name, arr, stages_applied, rec in outputs:
            save_image(arr, out_dir / out_name)
            entries.append(
                {
                    "output": out_name,
                    "stages": stages_applied,
                    "transform": rec.to_dict(),
                    "width": int(arr.shape[1]),
                    "height": int(arr.shape[0]),
                }
            )
        return {
            "source": file_name,
            "outputs": entries,
            "stabilization": stab_report.to_dict() if stab_report else None,
            "dispersion_before": before,
            "dispersion_after": after,
            "error": None,
        }
    except Exception as exc:  # per-image failures must not kill the run
        return {"source": file_name, "outputs": [], "stabilization": None,
                "dispersion_before": None, "dispersion_after": None,
                "error": f"{type(exc).__name__}: {exc}"}


def _list_inputs(input_dir: Path) -> list[str]:
    if not input_dir.is_dir():
        raise PipelineError(f"input directory {input_dir} does not exist")
    names = sorted(
        p.name for p in input_dir.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not names:
        raise PipelineError(f"no images found in {input_dir}")
    stems: dict[str, str] = {}
    for name in names:
        stem = Path(name).stem
        if stem in stems:
            raise PipelineError(
                f"output name collision: {stems[stem]} and {name} share stem {stem!r}"
            )
        stems[stem] = name
    return names


def _max_int_id(items: list[dict]) -> int:
    ids = [d["id"] for d in items if isinstance(d["id"], int)]
    return max(ids, default=0)


def _carry_annotations(
    config: PipelineConfig, ann_in: ann_mod.AnnotationSet, results: list[dict]
) -> tuple[ann_mod.AnnotationSet, dict[str, int]]:
    """Build the output annotation set for all emitted images.

    Base outputs keep their image ids with renamed files; each augmented
    variant gets a fresh image id and box-replayed annotations.  Returns the
    new set and a per-output-file dropped-box count.
    """
    entry_by_name = {im["file_name"]: im for im in ann_in.images}
    images: list[dict] = []
    new_anns: list[dict] = []
    dropped_by_output: dict[str, int] = {}
    next_image_id = _max_int_id(ann_in.images) + 1
    next_ann_id = _max_int_id(ann_in.annotations) + 1

    for result in results:
        if result["error"] or result["source"] not in entry_by_name:
            continue
        src_entry = entry_by_name[result["source"]]
        src_anns = [a for a in ann_in.annotations if a["image_id"] == src_entry["id"]]
        for entry in result["outputs"]:
            rec = TransformRecord.from_dict(entry["transform"])
            dropped = 0
            if rec.kind == "none":
                image_id = src_entry["id"]
            else:
                image_id = next_image_id
                next_image_id += 1
            images.append(
                {
                    **{k: v for k, v in src_entry.items() if k not in ("id", "file_name", "width", "height")},
                    "id": image_id,
                    "file_name": entry["output"],
                    "width": entry["width"],
                    "height": entry["height"],
                }
            )
            for ann in src_anns:
                new_box = transform_box(tuple(ann["bbox"]), rec)
                if new_box is None:
                    dropped += 1
                    continue
                new_ann = {k: v for k, v in ann.items() if k != "segmentation"}
                if rec.kind == "none" and "segmentation" in ann:
                    new_ann["segmentation"] = ann["segmentation"]
                if rec.kind == "none":
                    new_ann_id = ann["id"]
                else:
                    new_ann_id = next_ann_id
                    next_ann_id += 1
                new_ann.update(
                    {
                        "id": new_ann_id,
                        "image_id": image_id,
                        "bbox": list(new_box),
                        "area": float(new_box[2] * new_box[3])
                        if rec.kind == "crop"
                        else ann.get("area", float(new_box[2] * new_box[3])),
                    }
                )
                new_anns.append(new_ann)
            dropped_by_output[entry["output"]] = dropped
    out_set = ann_mod.AnnotationSet(
        images=images,
        categories=[dict(c) for c in ann_in.categories],
        annotations=new_anns,
        extra=dict(ann_in.extra),
    )
    return out_set, dropped_by_output


def run(config: PipelineConfig) -> Manifest:
    """Run the configured stage graph over every image in the input directory.

    Writes PNG outputs and ``manifest.json`` into the output directory, plus
    the carried-through annotation file when requested.  Per-image failures
    are recorded in the manifest and do not stop the run.
    """
    input_dir = Path(config.input_dir)
    output_dir = Path(config.output_dir)
    names = _list_inputs(input_dir)

    ann_in = None
    if config.annotations_in:
        ann_in = ann_mod.load_coco(config.annotations_in)
        missing = [im["file_name"] for im in ann_in.images
                   if im["file_name"] not in set(names)]
        if missing:
            raise PipelineError(
                f"annotation file lists images not present in {input_dir}: {missing[:5]}"
            )
    output_dir.mkdir(parents=True, exist_ok=True)

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_process_one, [config] * len(names), names))
    else:
        results = [_process_one(config, name) for name in names]
    results.sort(key=lambda r: r["source"])

    dropped_by_output: dict[str, int] = {}
    if ann_in is not None:
        ann_out, dropped_by_output = _carry_annotations(config, ann_in, results)
        if config.annotations_out:
            ann_mod.save_coco(ann_out, config.annotations_out)

    records = []
    failures = []
    before_vals = []
    after_vals = []
    for result in results:
        if result["error"]:
            failures.append({"source": result["source"], "error": result["error"]})
            continue
        before_vals.append(result["dispersion_before"])
        after_vals.append(result["dispersion_after"])
        for entry in result["outputs"]:
            records.append(
                {
                    "source": result["source"],
                    "output": entry["output"],
                    "stages": entry["stages"],
                    "transform": entry["transform"],
                    "stabilization": result["stabilization"],
                    "dropped_boxes": dropped_by_output.get(entry["output"], 0),
                }
            )
    summary = {
        "inputs": len(names),
        "processed": len(names) - len(failures),
        "failed": len(failures),
        "outputs": len(records),
        "dropped_boxes": sum(r["dropped_boxes"] for r in records),
        "dispersion_before_mean": (
            sum(before_vals) / len(before_vals) if before_vals else None
        ),
        "dispersion_after_mean": (
            sum(after_vals) / len(after_vals) if after_vals else None
        ),
    }
    # Worker count affects scheduling only, never results, so it is left out
    # of the echo to keep manifests comparable across runs.
    config_echo = config.to_dict()
    del config_echo["workers"]
    manifest = Manifest(
        config=config_echo,
        seed=config.seed,
        records=records,
        failures=failures,
        summary=summary,
    )
    manifest.save(output_dir / "manifest.json")
    return manifest
