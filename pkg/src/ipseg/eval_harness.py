"""Simulated promptable segmenter, mIoU evaluation, manifests, sweeps, reports."""

from __future__ import annotations

import csv
import io
import json
import os
import shlex
import subprocess
import tempfile
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AdapterError, GeometryError, ParamError
from .matcher import MatchParams, generate_prompts
from .prompt_embed import MaskMode, build_prompt_embedding
from .tensor_io import (
    PointPromptSet,
    SegMask,
    read_feature_map,
    read_mask,
    write_prompts,
)

CSV_HEADER = ["prompt_set", "fold", "class", "K", "c", "mask_mode", "iou"]


@dataclass(frozen=True)
class LabelGrid:
    """Integer instance-id grid: 0 is background, positive ids are instances."""

    labels: np.ndarray  # int32, shape (H, W)

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParamError(f"label grid must be 2-d and non-empty, got {arr.shape}")
        if arr.min() < 0:
            raise ParamError("labels must be >= 0")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def instance_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i > 0]


def label_components(mask: SegMask) -> LabelGrid:
    """4-connected components of a binary mask, labeled in row-major discovery order."""
    data = mask.data
    h, w = data.shape
    labels = np.zeros((h, w), dtype=np.int32)
    next_id = 0
    for r in range(h):
        for col in np.flatnonzero(data[r] == 1):
            if labels[r, col] != 0:
                continue
            next_id += 1
            queue = deque([(r, int(col))])
            labels[r, col] = next_id
            while queue:
                y, x = queue.popleft()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and data[ny, nx] == 1 and labels[ny, nx] == 0:
                        labels[ny, nx] = next_id
                        queue.append((ny, nx))
    return LabelGrid(labels)


def simulated_segment(gt: LabelGrid, prompts: PointPromptSet) -> SegMask:
    """Oracle segmenter: union of instances hit by positives minus any hit by negatives.

    A point on background contributes nothing; a negative on an instance
    removes that whole instance even if a positive also hit it.
    """
    for p in prompts.positives + prompts.negatives:
        if not (0 <= p.x < gt.width and 0 <= p.y < gt.height):
            raise GeometryError(f"prompt ({p.x}, {p.y}) outside {gt.height}x{gt.width} grid")
    positive_ids = {int(gt.labels[p.y, p.x]) for p in prompts.positives} - {0}
    negative_ids = {int(gt.labels[p.y, p.x]) for p in prompts.negatives} - {0}
    keep = positive_ids - negative_ids
    if not keep:
        return SegMask(np.zeros((gt.height, gt.width), dtype=np.uint8))
    return SegMask(np.isin(gt.labels, sorted(keep)).astype(np.uint8))


def iou(pred: SegMask, gt: SegMask) -> float:
    """Intersection over union; defined as 1.0 when both masks are empty."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise GeometryError(
            f"mask dimensions differ: {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    inter = int(np.count_nonzero(pred.data & gt.data))
    union = int(np.count_nonzero(pred.data | gt.data))
    if union == 0:
        return 1.0
    return inter / union


def external_segment(
    prompts: PointPromptSet,
    adapter_command: list[str] | str | None,
    expected_height: int,
    expected_width: int,
) -> SegMask:
    """Invoke the external segmenter subprocess contract.

    The command receives the prompt JSON path and the output mask path,
    either via ``{prompts}`` / ``{mask}`` placeholders or appended as the two
    final arguments. Exit 0 plus a valid P5 mask of the expected geometry
    signals success.
    """
    if adapter_command is None or adapter_command == "":
        raise AdapterError("not_configured", "no external segmenter adapter configured")
    argv = shlex.split(adapter_command) if isinstance(adapter_command, str) else list(adapter_command)
    with tempfile.TemporaryDirectory(prefix="ipseg-adapter-") as tmp:
        prompt_path = os.path.join(tmp, "prompts.json")
        mask_path = os.path.join(tmp, "mask.pgm")
        write_prompts(prompts, prompt_path)
        if any("{prompts}" in a or "{mask}" in a for a in argv):
            argv = [a.replace("{prompts}", prompt_path).replace("{mask}", mask_path) for a in argv]
        else:
            argv = argv + [prompt_path, mask_path]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
        except FileNotFoundError as exc:
            raise AdapterError("not_found", f"adapter executable not found: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise AdapterError("timeout", f"adapter timed out: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterError(
                "exit_status",
                f"adapter exited with status {proc.returncode}",
                diagnostics=proc.stderr.strip(),
            )
        try:
            mask = read_mask(mask_path)
        except Exception as exc:
            raise AdapterError("malformed_mask", f"adapter produced an invalid mask: {exc}") from exc
        if (mask.height, mask.width) != (expected_height, expected_width):
            raise AdapterError(
                "geometry",
                f"adapter mask is {mask.height}x{mask.width}, "
                f"expected {expected_height}x{expected_width}",
            )
        return mask


@dataclass(frozen=True)
class ManifestEntry:
    input_feature_path: Path
    prompt_feature_path: Path
    gt_mask_path: Path
    class_id: str
    fold_id: str
    prompt_mask_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: list[ManifestEntry]
    prompt_set_id: str
    folds: list[str]


def load_manifest(path) -> DatasetManifest:
    """Load and validate a dataset manifest; relative paths resolve next to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParamError(f"cannot load manifest {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParamError("manifest must be a JSON object")
    prompt_set_id = str(doc.get("prompt_set_id", ""))
    if not prompt_set_id:
        raise ParamError("manifest missing prompt_set_id")
    folds = [str(f) for f in doc.get("folds", [])]
    if not folds:
        raise ParamError("manifest declares no folds")
    raw_entries = doc.get("entries", [])
    if not raw_entries:
        raise ParamError("manifest has no entries")
    base = path.parent
    entries = []
    for i, raw in enumerate(raw_entries):
        if not isinstance(raw, dict):
            raise ParamError(f"entries[{i}] must be an object")
        def resolve(key: str, required: bool = True) -> Path | None:
            value = raw.get(key)
            if value is None:
                if required:
                    raise ParamError(f"entries[{i}] missing {key}")
                return None
            p = Path(value)
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ParamError(f"entries[{i}].{key}: file not found: {p}")
            return p
        fold_id = str(raw.get("fold_id", ""))
        if fold_id not in folds:
            raise ParamError(f"entries[{i}].fold_id {fold_id!r} not in declared folds {folds}")
        if "class_id" not in raw:
            raise ParamError(f"entries[{i}] missing class_id")
        entries.append(
            ManifestEntry(
                input_feature_path=resolve("input_feature_path"),
                prompt_feature_path=resolve("prompt_feature_path"),
                gt_mask_path=resolve("gt_mask_path"),
                prompt_mask_path=resolve("prompt_mask_path", required=False),
                class_id=str(raw["class_id"]),
                fold_id=fold_id,
            )
        )
    class_folds: dict[str, str] = {}
    for i, entry in enumerate(entries):
        seen = class_folds.setdefault(entry.class_id, entry.fold_id)
        if seen != entry.fold_id:
            raise ParamError(
                f"entries[{i}]: class {entry.class_id!r} appears in folds "
                f"{seen!r} and {entry.fold_id!r}; folds must partition classes"
            )
    return DatasetManifest(entries=entries, prompt_set_id=prompt_set_id, folds=folds)


@dataclass
class EvalReport:
    """Per-class and per-fold mIoU plus the configuration that produced them."""

    per_class_iou: dict[str, float]
    per_fold_miou: dict[str, float]
    mean_miou: float
    class_to_fold: dict[str, str]
    config_echo: dict
    failures: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config_echo,
            "per_class_iou": self.per_class_iou,
            "per_fold_miou": self.per_fold_miou,
            "mean_miou": self.mean_miou,
            "class_to_fold": self.class_to_fold,
            "failures": self.failures,
        }

    def csv_rows(self) -> list[list[str]]:
        rows = []
        cfg = self.config_echo
        for class_id, value in self.per_class_iou.items():
            rows.append(
                [
                    cfg["prompt_set_id"],
                    self.class_to_fold[class_id],
                    class_id,
                    str(cfg["k"]),
                    str(cfg["c"]),
                    cfg["mask_mode"],
                    repr(value),
                ]
            )
        return rows


def _worker_count() -> int:
    raw = os.environ.get("IPSEG_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ParamError(f"IPSEG_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ParamError(f"IPSEG_THREADS must be >= 0, got {n}")
    if n == 0:
        return min(os.cpu_count() or 1, 8)
    return n


def _evaluate_entry(
    entry: ManifestEntry,
    params: MatchParams,
    segmenter: str,
    mask_mode: MaskMode,
    adapter_command,
    min_coverage: float,
) -> float:
    prompt_fm = read_feature_map(entry.prompt_feature_path)
    mask = None
    if mask_mode is not MaskMode.NONE:
        if entry.prompt_mask_path is None:
            raise ParamError(f"mask mode {mask_mode.value!r} needs prompt_mask_path")
        mask = read_mask(entry.prompt_mask_path)
    embedding = build_prompt_embedding(prompt_fm, mask, mask_mode, min_coverage=min_coverage)
    input_fm = read_feature_map(entry.input_feature_path)
    prompts = generate_prompts(input_fm, embedding, params)
    gt = read_mask(entry.gt_mask_path)
    if segmenter == "simulated":
        pred = simulated_segment(label_components(gt), prompts)
    else:
        pred = external_segment(prompts, adapter_command, gt.height, gt.width)
    return iou(pred, gt)


def evaluate(
    manifest: DatasetManifest,
    params: MatchParams,
    segmenter: str = "simulated",
    *,
    mask_mode: MaskMode = MaskMode.SALIENCY,
    adapter_command: list[str] | str | None = None,
    fusion_echo: str = "precomputed",
    min_coverage: float = 0.5,
) -> EvalReport:
    """Run the full pipeline over a manifest and aggregate mIoU.

    Per-image IoU is averaged into per-class IoU (manifest order), classes
    average into their fold's mIoU, and folds average into the mean. Failing
    entries are skipped and flagged in the report instead of aborting.
    """
    if segmenter not in ("simulated", "external"):
        raise ParamError(f"unknown segmenter {segmenter!r}")
    if segmenter == "external" and not adapter_command:
        raise AdapterError("not_configured", "external segmenter requires an adapter command")

    workers = _worker_count()

    def run_one(indexed):
        i, entry = indexed
        try:
            return i, _evaluate_entry(
                entry, params, segmenter, mask_mode, adapter_command, min_coverage
            ), None
        except Exception as exc:  # skip-and-flag policy
            return i, None, f"{type(exc).__name__}: {exc}"

    indexed_entries = list(enumerate(manifest.entries))
    if workers > 1 and len(indexed_entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, indexed_entries))
    else:
        results = [run_one(item) for item in indexed_entries]
    results.sort(key=lambda item: item[0])  # collate in manifest order

    class_values: dict[str, list[float]] = {}
    class_to_fold: dict[str, str] = {}
    failures = []
    for (i, value, error), entry in zip(results, manifest.entries):
        class_to_fold.setdefault(entry.class_id, entry.fold_id)
        class_values.setdefault(entry.class_id, [])
        if error is not None:
            failures.append(
                {
                    "entry_index": i,
                    "input_feature_path": str(entry.input_feature_path),
                    "class_id": entry.class_id,
                    "error": error,
                }
            )
        else:
            class_values[entry.class_id].append(value)

    per_class: dict[str, float] = {}
    for class_id, values in class_values.items():
        if values:
            per_class[class_id] = float(np.mean(values))
        else:
            failures.append({"class_id": class_id, "error": "no successful entries for class"})
    per_fold: dict[str, float] = {}
    for fold in manifest.folds:
        fold_classes = [cid for cid in per_class if class_to_fold[cid] == fold]
        if fold_classes:
            per_fold[fold] = float(np.mean([per_class[cid] for cid in fold_classes]))
    mean_miou = float(np.mean(list(per_fold.values()))) if per_fold else 0.0

    config_echo = {
        "k": params.k,
        "c": params.c,
        "mask_mode": mask_mode.value,
        "fusion": fusion_echo,
        "prompt_set_id": manifest.prompt_set_id,
        "segmenter": segmenter,
    }
    return EvalReport(
        per_class_iou=per_class,
        per_fold_miou=per_fold,
        mean_miou=mean_miou,
        class_to_fold=class_to_fold,
        config_echo=config_echo,
        failures=failures,
    )


@dataclass(frozen=True)
class SweepItem:
    k: int
    c: int
    report: EvalReport | None = None
    skipped_reason: str | None = None


def sweep(
    manifest: DatasetManifest,
    k_list: list[int],
    c_list: list[int],
    segmenter: str = "simulated",
    **eval_kwargs,
) -> list[SweepItem]:
    """Evaluate the cartesian product of (K, c); invalid pairs become flagged rows."""
    seen = set()
    items: list[SweepItem] = []
    for k in k_list:
        for c in c_list:
            if (k, c) in seen:
                continue
            seen.add((k, c))
            if c > k:
                items.append(SweepItem(k=k, c=c, skipped_reason=f"c={c} > K={k}"))
                continue
            report = evaluate(manifest, MatchParams(k=k, c=c), segmenter, **eval_kwargs)
            items.append(SweepItem(k=k, c=c, report=report))
    return items


def render_csv(rows: list[list[str]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def write_eval_report(report: EvalReport, directory) -> tuple[Path, Path]:
    """Write report.csv and report.json under the directory; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "report.csv"
    json_path = directory / "report.json"
    csv_path.write_bytes(render_csv(report.csv_rows()))
    json_path.write_text(json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path


def sweep_csv_rows(items: list[SweepItem], prompt_set_id: str, mask_mode: MaskMode) -> list[list[str]]:
    rows = []
    for item in items:
        if item.skipped_reason is not None:
            rows.append(
                [prompt_set_id, "*", "*", str(item.k), str(item.c), mask_mode.value,
                 f"skipped({item.skipped_reason})"]
            )
        else:
            rows.extend(item.report.csv_rows())
    return rows


def write_sweep_report(
    items: list[SweepItem], directory, prompt_set_id: str, mask_mode: MaskMode
) -> tuple[Path, Path]:
    """Write sweep.csv and sweep.json under the directory; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "sweep.csv"
    json_path = directory / "sweep.json"
    csv_path.write_bytes(render_csv(sweep_csv_rows(items, prompt_set_id, mask_mode)))
    summary = [
        {
            "k": item.k,
            "c": item.c,
            "skipped": item.skipped_reason,
            "report": item.report.to_json_dict() if item.report else None,
        }
        for item in items
    ]
    json_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path
