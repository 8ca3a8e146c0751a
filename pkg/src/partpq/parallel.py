"""Dataset-level evaluation over a process pool.

Workers are stateless: each receives one picklable work item, loads its two
maps, and returns an :class:`ImageResult`. The coordinator folds results in
sorted-stem order with a fixed pairwise tree, so the report does not depend on
the worker count or completion order.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from partpq.codec import LabelMap
from partpq.metrics import EvalOptions, ImageResult, evaluate_image, fold
from partpq.spec import DatasetSpec

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """One or more images of a dataset could not be evaluated."""


class WorkItem(Protocol):
    stem: str

    def load(self, spec: DatasetSpec) -> tuple[LabelMap, LabelMap]: ...


@dataclass(frozen=True)
class FilePair:
    stem: str
    gt: Path
    pred: Path
    fmt: str = "packed"

    def load(self, spec: DatasetSpec) -> tuple[LabelMap, LabelMap]:
        from partpq.io import read_label_map

        return read_label_map(self.gt, self.fmt, spec), read_label_map(self.pred, self.fmt, spec)


@dataclass(frozen=True)
class SyntheticPair:
    stem: str
    recipe: "object"  # SceneRecipe; typed loosely to keep the harness import lazy

    def load(self, spec: DatasetSpec) -> tuple[LabelMap, LabelMap]:
        from partpq.harness.synth import generate_scene

        return generate_scene(self.recipe, spec)


_worker_spec: DatasetSpec | None = None
_worker_options: EvalOptions | None = None


def _init(spec: DatasetSpec, options: EvalOptions) -> None:
    global _worker_spec, _worker_options
    _worker_spec, _worker_options = spec, options


def _run(item: WorkItem) -> ImageResult | str:
    try:
        gt, pred = item.load(_worker_spec)
        return evaluate_image(gt, pred, _worker_spec, _worker_options)
    except ValueError as e:  # bad files, invalid maps, shape mismatches
        return f"{item.stem}: {e}"


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def evaluate_items(
    items: Iterable[WorkItem],
    spec: DatasetSpec,
    options: EvalOptions = EvalOptions(),
    workers: int | None = None,
) -> ImageResult:
    """Evaluate every item and fold the per-image results by sorted stem."""
    items = sorted(items, key=lambda it: it.stem)
    if not items:
        raise ValueError("no image pairs to evaluate")
    workers = workers or default_workers()
    log.info("evaluating %d pairs on %d worker(s)", len(items), workers)
    if workers == 1:
        _init(spec, options)
        results = [_run(it) for it in items]
    else:
        chunk = max(1, len(items) // (4 * workers))
        with ProcessPoolExecutor(workers, initializer=_init, initargs=(spec, options)) as pool:
            results = list(pool.map(_run, items, chunksize=chunk))
    errors = [r for r in results if isinstance(r, str)]
    if errors:
        raise DatasetError(f"{len(errors)} of {len(items)} pair(s) failed:\n" + "\n".join(f"  {e}" for e in errors))
    return fold(results)
