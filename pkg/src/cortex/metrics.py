"""Confusion matrices, precision/recall reports, per-epoch curves and their files."""

from __future__ import annotations

import csv
import io
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ArtifactError, ValidationError

DEFAULT_CLASS_NAMES = ("healthy", "glioma", "meningioma", "pituitary")
CURVE_FIELDS = ("epoch", "train_loss", "train_accuracy", "eval_accuracy", "eval_macro_precision")


def predict_class(outputs) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class id."""
    out = np.asarray(getattr(outputs, "array", outputs))
    if out.ndim != 2:
        raise ValidationError(f"model outputs must be [N, K], got {out.shape}")
    return np.argmax(out, axis=1)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(true_labels, predicted_labels, n_classes: int = 4) -> ConfusionMatrix:
    t = np.asarray(true_labels).astype(np.int64).reshape(-1)
    p = np.asarray(predicted_labels).astype(np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValidationError(f"length mismatch: {t.size} true vs {p.size} predicted labels")
    for arr in (t, p):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValidationError(f"labels must lie in 0..{n_classes - 1}")
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class_precision: list  # None where no example was predicted as that class
    per_class_recall: list  # None where the class has no true examples
    macro_precision: float
    micro_precision: float
    macro_recall: float

    @property
    def undefined_precision(self) -> list[int]:
        return [i for i, v in enumerate(self.per_class_precision) if v is None]


def report(cm: ConfusionMatrix) -> EvalReport:
    m = cm.counts
    total = m.sum()
    if total <= 0:
        raise ValidationError("cannot report on an empty confusion matrix")
    diag = np.diag(m)
    cols = m.sum(axis=0)
    rows = m.sum(axis=1)
    precision = [float(diag[c] / cols[c]) if cols[c] > 0 else None for c in range(len(diag))]
    recall = [float(diag[c] / rows[c]) if rows[c] > 0 else None for c in range(len(diag))]
    defined_p = [v for v in precision if v is not None]
    defined_r = [v for v in recall if v is not None]
    accuracy = float(diag.sum() / total)
    return EvalReport(
        confusion=cm,
        accuracy=accuracy,
        per_class_precision=precision,
        per_class_recall=recall,
        macro_precision=float(np.mean(defined_p)) if defined_p else 0.0,
        # single-label classification: pooled precision equals accuracy
        micro_precision=accuracy,
        macro_recall=float(np.mean(defined_r)) if defined_r else 0.0,
    )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    eval_accuracy: Optional[float] = None
    eval_macro_precision: Optional[float] = None


@dataclass
class CurveLog:
    records: list = field(default_factory=list)

    def append(self, record: EpochRecord):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValidationError("curve log epochs must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    def has_eval(self) -> bool:
        return any(r.eval_accuracy is not None for r in self.records)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def curves_csv(log: CurveLog) -> str:
    cols = CURVE_FIELDS if log.has_eval() else CURVE_FIELDS[:3]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in log:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def read_curves(path) -> CurveLog:
    log = CurveLog()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            opt = lambda k: float(row[k]) if row.get(k) else None  # noqa: E731
            log.append(
                EpochRecord(
                    int(row["epoch"]),
                    float(row["train_loss"]),
                    float(row["train_accuracy"]),
                    opt("eval_accuracy"),
                    opt("eval_macro_precision"),
                )
            )
    return log


def confusion_csv(cm: ConfusionMatrix, class_names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\predicted", *class_names])
    for name, row in zip(class_names, cm.counts):
        w.writerow([name, *(int(v) for v in row)])
    return buf.getvalue()


def read_confusion(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    counts = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
    return names, counts


def report_text(rep: Optional[EvalReport], log: Optional[CurveLog], class_names: Sequence[str], notes=()) -> str:
    lines = []
    if log is not None and len(log):
        last = log.records[-1]
        lines.append(f"epochs: {last.epoch}")
        lines.append(f"final_train_loss: {_fmt(last.train_loss)}")
        lines.append(f"final_train_accuracy: {_fmt(last.train_accuracy)}")
    if rep is not None:
        lines.append(f"evaluated: {rep.confusion.total}")
        lines.append(f"accuracy: {rep.accuracy:.6f}")
        lines.append(f"macro_precision: {rep.macro_precision:.6f}")
        lines.append(f"micro_precision: {rep.micro_precision:.6f}")
        lines.append(f"macro_recall: {rep.macro_recall:.6f}")
        for i, name in enumerate(class_names):
            p, r = rep.per_class_precision[i], rep.per_class_recall[i]
            lines.append(f"precision[{name}]: {'undefined' if p is None else f'{p:.6f}'}")
            lines.append(f"recall[{name}]: {'undefined' if r is None else f'{r:.6f}'}")
        if rep.undefined_precision:
            excluded = ", ".join(class_names[i] for i in rep.undefined_precision)
            lines.append(f"note: no predictions for {excluded}; excluded from macro precision")
    lines.extend(f"note: {n}" for n in notes)
    return "\n".join(lines) + "\n"


def emit_artifacts(
    curve_log: Optional[CurveLog],
    eval_report: Optional[EvalReport],
    out_dir,
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
    plots: bool = True,
    extra_files: Optional[dict] = None,
) -> list[Path]:
    """Write ``curves.csv``, ``confusion.csv``, ``report.txt`` and SVG plots.

    Files are staged in a scratch directory and moved into ``out_dir`` only
    once all of them rendered. ``curve_log=None`` skips the curve outputs and
    ``eval_report=None`` skips the confusion outputs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
    except OSError as exc:
        raise ArtifactError(f"cannot write to {out}: {exc.strerror}") from exc
    notes = []
    try:
        files = {}
        if curve_log is not None:
            files["curves.csv"] = curves_csv(curve_log)
        if eval_report is not None:
            files["confusion.csv"] = confusion_csv(eval_report.confusion, class_names)
        files.update(extra_files or {})
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8")
        if plots:
            from . import plotting

            if curve_log is not None and len(curve_log):
                plotting.accuracy_curve(curve_log, stage / "accuracy.svg")
                plotting.loss_curve(curve_log, stage / "loss.svg")
            elif curve_log is not None:
                notes.append("curve log is empty; accuracy and loss plots omitted")
            if eval_report is not None:
                plotting.confusion_heatmap(eval_report.confusion, class_names, stage / "confusion.svg")
        (stage / "report.txt").write_text(report_text(eval_report, curve_log, class_names, notes), encoding="utf-8")
        written = []
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
            written.append(out / f.name)
        return written
    except OSError as exc:
        raise ArtifactError(f"failed writing artifacts to {out}: {exc}") from exc
    finally:
        shutil.rmtree(stage, ignore_errors=True)
