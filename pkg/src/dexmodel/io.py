"""Versioned on-disk formats for datasets, models and result files.

Datasets are JSON lines: a header line then one line per episode. Models and
results are single JSON documents. Floats are written with ``repr`` precision
so every format round-trips bit-exactly and rewriting a loaded artifact
reproduces the original bytes.
"""

from __future__ import annotations

import functools
import json
import os
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .factorized import ExternalModel
from .internal import Dataset, Episode, ForwardModel, InverseModel
from .nn import DenseNet

DATASET_FORMAT = "dexmodel-dataset"
MODEL_FORMAT = "dexmodel-model"
RESULT_FORMAT = "dexmodel-result"
VERSION = 1


class CorruptFileError(ValueError):
    pass


class VersionMismatchError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


def _atomic_write(path, text):
    """Write via a temporary file so a failed save leaves no partial artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _read_json(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptFileError(f"{what}: {e}") from e


def _check_header(d, fmt, what):
    if not isinstance(d, dict) or d.get("format") != fmt:
        raise CorruptFileError(f"{what}: not a {fmt} file")
    if d.get("version") != VERSION:
        raise VersionMismatchError(f"{what}: format version {d.get('version')} != {VERSION}")


# -- datasets -------------------------------------------------------------------


def save_dataset(dataset, path):
    header = {"format": DATASET_FORMAT, "version": VERSION, "hand": dataset.hand,
              "mode": dataset.mode, "seed": dataset.seed, "state_dim": dataset.state_dim,
              "action_dim": dataset.action_dim, "episodes": len(dataset.episodes)}
    lines = [json.dumps(header, sort_keys=True)]
    for e in dataset.episodes:
        lines.append(json.dumps({"states": e.states.tolist(), "actions": e.actions.tolist()}))
    _atomic_write(path, "\n".join(lines) + "\n")


def load_dataset(path):
    text = Path(path).read_text()
    if not text.endswith("\n"):
        raise CorruptFileError(f"{path}: truncated (no final newline)")
    lines = text.splitlines()
    if not lines:
        raise CorruptFileError(f"{path}: empty file")
    header = _read_json(lines[0], path)
    _check_header(header, DATASET_FORMAT, path)
    if len(lines) - 1 != header["episodes"]:
        raise CorruptFileError(f"{path}: header promises {header['episodes']} episodes, found {len(lines) - 1}")
    h, k = header["state_dim"], header["action_dim"]
    episodes = []
    for i, line in enumerate(lines[1:]):
        d = _read_json(line, f"{path} episode {i}")
        try:
            s = np.asarray(d["states"], dtype=float).reshape(-1, h)
            a = np.asarray(d["actions"], dtype=float).reshape(-1, k)
        except (KeyError, ValueError) as e:
            raise CorruptFileError(f"{path} episode {i}: {e}") from e
        if len(s) != len(a) + 1:
            raise CorruptFileError(f"{path} episode {i}: {len(s)} states for {len(a)} actions")
        episodes.append(Episode(s, a))
    return Dataset(episodes, h, k, hand=header["hand"], mode=header["mode"], seed=header["seed"])


# -- models ---------------------------------------------------------------------


def model_to_dict(model):
    d = {"format": MODEL_FORMAT, "version": VERSION, "net": model.net.to_dict(),
         "state_dim": model.state_dim}
    if isinstance(model, ForwardModel):
        d.update(kind="forward", action_dim=model.action_dim, horizon=model.horizon,
                 discount=model.discount, report=model.report)
    elif isinstance(model, InverseModel):
        d.update(kind="inverse", action_dim=model.action_dim, target_shift=model.target_shift,
                 sigma=None if model.sigma is None else model.sigma.tolist(), report=model.report)
    elif isinstance(model, ExternalModel):
        d.update(kind="external", object_dim=model.object_dim, horizon=model.horizon,
                 discount=model.discount)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return d


def model_from_dict(d, what="model"):
    _check_header(d, MODEL_FORMAT, what)
    try:
        net = DenseNet.from_dict(d["net"])
        kind = d["kind"]
        if kind == "forward":
            return ForwardModel(net, d["state_dim"], d["action_dim"], d["horizon"], d["discount"],
                                report=d.get("report", {}))
        if kind == "inverse":
            sigma = None if d["sigma"] is None else np.asarray(d["sigma"], dtype=float)
            return InverseModel(net, d["state_dim"], d["action_dim"], sigma, d["target_shift"],
                                report=d.get("report", {}))
        if kind == "external":
            return ExternalModel(net, d["state_dim"], d["object_dim"], d["horizon"], d["discount"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFileError(f"{what}: {e}") from e
    raise CorruptFileError(f"{what}: unknown model kind {kind!r}")


def save_model(model, path):
    _atomic_write(path, dumps(model_to_dict(model)))


def load_model(path, hand=None):
    """Load a model; with ``hand`` given its H and K must match the preset."""
    model = model_from_dict(_read_json(Path(path).read_text(), path), str(path))
    if hand is not None:
        k = getattr(model, "action_dim", None)
        if k is not None and k != hand.action_dim:
            raise DimensionMismatchError(
                f"model has K={k} but hand {hand.name!r} has K={hand.action_dim}")
        if model.state_dim != hand.state_dim:
            raise DimensionMismatchError(
                f"model has H={model.state_dim} but hand {hand.name!r} has H={hand.state_dim}")
    return model


# -- results --------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def build_version():
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return __version__
    desc = out.stdout.strip()
    return f"{__version__}+{desc}" if out.returncode == 0 and desc else __version__


def save_result(path, kind, config, payload):
    """Result document embedding the resolved config and the build version."""
    doc = {"format": RESULT_FORMAT, "version": VERSION, "kind": kind,
           "dexmodel_version": build_version(), "config": config, "result": payload}
    _atomic_write(path, dumps(doc))


def load_result(path):
    d = _read_json(Path(path).read_text(), path)
    _check_header(d, RESULT_FORMAT, path)
    return d


def save_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")
