"""Layer-wise image embeddings from a hub vision model, exported in the
eegalign interchange format (manifest JSON + NPY v1.0 tensors).

This adapter only *writes* the interchange format; it does not depend on
the alignment engine.  Stimulus ids are the sorted image file stems, so
downstream id-based alignment works regardless of row order.
"""

import dataclasses
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from transformers import AutoImageProcessor, AutoModel

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tiff")

# model families whose token sequence starts with a class token
CLS_FIRST_MODEL_TYPES = {"vit", "deit", "clip_vision_model"}

SUPPORTED_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class ExtractionError(Exception):
    pass


@dataclass
class ExtractionJob:
    model: str                            # hub name or local checkpoint path
    image_dir: str
    out_dir: str
    layers: object = "all"                # 'all' or iterable of block indices
    token_pool: str = "mean_patches"      # or 'mean_all'
    batch_size: int = 8
    device: str = "cpu"
    dtype: str = "<f4"
    on_error: str = "abort"               # or 'skip'
    extraction_point: str = "vision_encoder"   # or 'decoder'
    model_id: str | None = None

    def __post_init__(self):
        if self.token_pool not in ("mean_patches", "mean_all"):
            raise ExtractionError(f"unknown token_pool {self.token_pool!r}")
        if self.on_error not in ("abort", "skip"):
            raise ExtractionError(f"unknown on_error {self.on_error!r}")
        if self.extraction_point not in ("vision_encoder", "decoder"):
            raise ExtractionError(f"unknown extraction_point {self.extraction_point!r}")
        if self.dtype not in SUPPORTED_DTYPES:
            raise ExtractionError(f"dtype must be <f4 or <f8, got {self.dtype!r}")
        if self.batch_size < 1:
            raise ExtractionError("batch_size must be >= 1")


def sanitize_model_id(name: str) -> str:
    tail = name.rstrip("/").split("/")[-1]
    return re.sub(r"[^A-Za-z0-9._-]+", "-", tail).lower()


def list_images(image_dir) -> list:
    """(stem, path) pairs in deterministic sorted-stem order."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise ExtractionError(f"image directory not found: {image_dir}")
    found = {}
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS or not path.is_file():
            continue
        if path.stem in found:
            raise ExtractionError(f"duplicate stimulus id {path.stem!r}: "
                                  f"{found[path.stem]} and {path}")
        found[path.stem] = path
    if not found:
        raise ExtractionError(f"no images in {image_dir}")
    return sorted(found.items())


def _resolve_module(model, extraction_point: str):
    if extraction_point == "vision_encoder" and hasattr(model, "vision_model"):
        return model.vision_model
    return model


def _drop_cls(model_type: str, token_pool: str) -> bool:
    if token_pool == "mean_all":
        return False
    if model_type in CLS_FIRST_MODEL_TYPES:
        return True
    logger.info("model type %r has no known class token; pooling all tokens",
                model_type)
    return False


def _forward_batch(module, pixel_values):
    try:
        with torch.no_grad():
            return module(pixel_values=pixel_values, output_hidden_states=True)
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise ExtractionError(
                "ran out of memory; retry with a smaller --batch-size") from exc
        raise


def extract(job: ExtractionJob) -> Path:
    """Run the model over the image directory; write tensors + manifest.

    Returns the manifest path.  The feature tensor has shape
    [n_images x n_selected_layers x dim]; each vector is the mean over the
    visual tokens of that layer (class token excluded when the model family
    is known to have one).
    """
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_id = job.model_id or sanitize_model_id(job.model)

    processor = AutoImageProcessor.from_pretrained(job.model)
    model = AutoModel.from_pretrained(job.model)
    model.eval()
    device = torch.device(job.device)
    model.to(device)
    module = _resolve_module(model, job.extraction_point)
    drop_cls = _drop_cls(getattr(module.config, "model_type",
                                 model.config.model_type), job.token_pool)

    images = list_images(job.image_dir)
    kept_ids = []
    skipped = []
    batches = []
    pending = []

    def flush():
        if not pending:
            return
        pixel = processor(images=[im for _, im in pending],
                          return_tensors="pt")["pixel_values"].to(device)
        out = _forward_batch(module, pixel)
        hidden = out.hidden_states
        if hidden is None:
            raise ExtractionError("model does not expose hidden states")
        blocks = hidden[1:]                       # drop the embedding output
        sel = range(len(blocks)) if job.layers == "all" else job.layers
        per_layer = []
        for l in sel:
            if not 0 <= int(l) < len(blocks):
                raise ExtractionError(f"layer {l} out of range "
                                      f"(model has {len(blocks)} blocks)")
            tokens = blocks[int(l)]
            if drop_cls:
                tokens = tokens[:, 1:, :]
            per_layer.append(tokens.mean(dim=1))  # batch x dim
        batches.append(torch.stack(per_layer, dim=1).cpu().numpy())
        kept_ids.extend(stem for stem, _ in pending)
        pending.clear()

    for stem, path in images:
        try:
            with Image.open(path) as im:
                pending.append((stem, im.convert("RGB")))
        except (UnidentifiedImageError, OSError) as exc:
            if job.on_error == "abort":
                raise ExtractionError(f"cannot decode {path}: {exc}") from exc
            logger.warning("skipping undecodable image %s: %s", path, exc)
            skipped.append(str(path))
            continue
        if len(pending) >= job.batch_size:
            flush()
    flush()

    if not kept_ids:
        raise ExtractionError("no images could be decoded")
    data = np.concatenate(batches, axis=0).astype(SUPPORTED_DTYPES[job.dtype])
    if not np.all(np.isfinite(data)):
        raise ExtractionError("model produced non-finite features")
    n_layers = data.shape[1]
    sel = list(range(n_layers)) if job.layers == "all" else [int(l) for l in job.layers]
    layer_names = [f"layer{l}" for l in sel]

    tensor_path = out_dir / f"features_{model_id}.npy"
    _save_npy_v1(data, tensor_path)

    manifest = {
        "version": "1",
        "subjects": [],
        "features": [{
            "model_id": model_id,
            "path": tensor_path.name,
            "layer_names": layer_names,
            "stimulus_ids": kept_ids,
        }],
        "sfreq": 1.0,
        "t_start_ms": 0.0,
        "t_end_ms": 0.0,
        "dtype": job.dtype,
        "provenance": {
            "tool": "extract-features",
            "model": job.model,
            "extraction_point": job.extraction_point,
            "token_pool": job.token_pool,
            "class_token_excluded": drop_cls,
            "layers": "all" if job.layers == "all" else sel,
            "skipped_images": skipped,
        },
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path


def _save_npy_v1(arr, path):
    """NPY v1.0, C order, little-endian float; np.save emits exactly this
    for plain float arrays, asserted here to keep the format contract."""
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(arr), version=(1, 0))


def merge_into_manifest(feature_manifest_path, eeg_manifest_path, out_path) -> Path:
    """Combine an extractor manifest with an existing EEG dataset manifest.

    Subjects, montage, categories, and epoch geometry come from the EEG
    manifest; this tool's features are appended (replacing any previous
    entry with the same model_id).  Referenced files stay where they are;
    paths are rewritten relative to the merged manifest's directory.
    """
    feature_manifest_path = Path(feature_manifest_path)
    eeg_manifest_path = Path(eeg_manifest_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    with open(feature_manifest_path, "r", encoding="utf-8") as fh:
        feat_doc = json.load(fh)
    with open(eeg_manifest_path, "r", encoding="utf-8") as fh:
        eeg_doc = json.load(fh)
    if feat_doc.get("dtype") != eeg_doc.get("dtype"):
        raise ExtractionError(
            f"dtype mismatch: features {feat_doc.get('dtype')} "
            f"vs EEG {eeg_doc.get('dtype')} (re-extract with --dtype)")

    def relocate(doc_dir, rel):
        return os.path.relpath((doc_dir / rel).resolve(), out_path.parent.resolve())

    merged = dict(eeg_doc)
    for ent in merged.get("subjects", []):
        ent["eeg_path"] = relocate(eeg_manifest_path.parent, ent["eeg_path"])
    for key in ("montage_path", "categories_path"):
        if merged.get(key):
            merged[key] = relocate(eeg_manifest_path.parent, merged[key])

    new_ids = {f["model_id"] for f in feat_doc["features"]}
    features = [dict(f) for f in merged.get("features", [])
                if f["model_id"] not in new_ids]
    for ent in features:
        ent["path"] = relocate(eeg_manifest_path.parent, ent["path"])
    for ent in feat_doc["features"]:
        ent = dict(ent)
        ent["path"] = relocate(feature_manifest_path.parent, ent["path"])
        features.append(ent)
    merged["features"] = features
    merged["provenance"] = feat_doc.get("provenance", {})

    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(merged, fh, indent=1)
    return out_path
