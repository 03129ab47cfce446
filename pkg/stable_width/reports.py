"""Report writers. Every file carries the config hash and package versions.

Outputs contain no timestamps or paths so that a rerun with the same config and
seed reproduces them byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy

from . import __version__
from .logger import get_logger

logger = get_logger("reports")


def config_hash(config: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON form of ``config``."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def versions() -> Dict[str, str]:
    return {"stable_width": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def provenance(config: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    return {"config_hash": config_hash(config or {}), "versions": versions()}


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def write_json(path: Union[str, Path], payload: Mapping[str, Any], config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write ``payload`` plus a ``provenance`` block as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    body["provenance"] = provenance(config)
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
    logger.debug(f"wrote {path}")
    return path


def write_csv(
    path: Union[str, Path],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config: Optional[Mapping[str, Any]] = None,
) -> Path:
    """CSV with a leading ``#`` provenance comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prov = provenance(config)
    stamp = " ".join([f"config_hash={prov['config_hash']}"] + [f"{k}={v}" for k, v in sorted(prov["versions"].items())])
    with open(path, "w", newline="") as f:
        f.write(f"# {stamp}\n")
        writer = csv.writer(f)
        writer.writerow(list(header))
        writer.writerows(rows)
    logger.debug(f"wrote {path}")
    return path


def read_csv(path: Union[str, Path]) -> list:
    """Rows of a CSV written by :func:`write_csv`, header first, provenance line skipped."""
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.reader(lines))
