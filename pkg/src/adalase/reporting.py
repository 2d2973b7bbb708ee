"""CSV/manifest emission. All files are written atomically (temp + rename)."""

import csv
import hashlib
import json
import os
import tempfile


def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_metrics_csv(result, path):
    k = len(result.report[0].q)
    header = (["epoch", "lr", "train_loss", "pseudo_loss", "val_loss", "test_acc"]
              + [f"q_{i}" for i in range(k)]
              + [f"probe_loss_{i}" for i in range(k)])
    rows = []
    for rec in result.report:
        probe = rec.probe_losses if rec.probe_losses is not None else [""] * k
        rows.append([rec.epoch, f"{rec.lr:.10g}", f"{rec.train_loss:.10g}",
                     "" if rec.pseudo_loss is None else f"{rec.pseudo_loss:.10g}",
                     "" if rec.val_loss is None else f"{rec.val_loss:.10g}",
                     f"{rec.test_acc:.6f}"]
                    + [f"{q:.12g}" for q in rec.q]
                    + [p if p == "" else f"{p:.10g}" for p in probe])
    atomic_write_text(path, _csv_text(header, rows))


def write_ratio_csv(result, path):
    k = len(result.ratio_history[0])
    header = ["epoch"] + [f"q_{i}" for i in range(k)] + [f"selected_{i}" for i in range(k)]
    epochs = len(result.ratio_history) - 1
    iters = len(result.audit.selected) // max(epochs, 1)
    rows = []
    for e in range(epochs):
        window = result.audit.selected[e * iters : (e + 1) * iters]
        hist = [window.count(i) for i in range(k)]
        rows.append([e] + [f"{q:.12g}" for q in result.ratio_history[e + 1]] + hist)
    atomic_write_text(path, _csv_text(header, rows))


def write_audit_csv(rows, path):
    header = ["seed", "x_metric", "y_metric", "n_all"]
    atomic_write_text(path, _csv_text(
        header, [[seed, f"{x:.8g}", f"{y:.8g}", n] for seed, x, y, n in rows]))


def content_hash(payloads):
    """sha256 over a sequence of byte strings; stable run-input fingerprint."""
    h = hashlib.sha256()
    for p in payloads:
        h.update(hashlib.sha256(p).digest())
    return h.hexdigest()


def write_manifest(path, effective_config, seed, input_hash):
    atomic_write_text(path, json.dumps(
        {"config": effective_config, "seed": seed, "input_hash": input_hash},
        indent=2, sort_keys=True) + "\n")
