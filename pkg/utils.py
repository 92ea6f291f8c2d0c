import os
import csv
import json
import struct
import tempfile
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, Iterable, Sequence

import numpy as np
import pandas as pd
import pytz
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from state import FluidState, ParticleEnsemble

PARTICLE_MAGIC = b"NSVP"
PARTICLE_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def fmt_num(x: float) -> str:
    return f"{x:.6g}"


def utc_now_iso() -> str:
    return datetime.now(pytz.UTC).isoformat(timespec="seconds")


def _ensure_dir(path: str):
    d = os.path.dirname(os.path.abspath(path))
    if d and not os.path.isdir(d):
        os.makedirs(d, exist_ok=True)


@contextmanager
def _atomic(path: str, mode: str = "w"):
    """Write to a temp file in the target directory, then os.replace onto `path`."""
    _ensure_dir(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        kw = {"newline": "", "encoding": "utf-8"} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kw) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


_io_retry = retry(retry=retry_if_exception_type(OSError), wait=wait_fixed(1), stop=stop_after_attempt(3),
                  reraise=True)


def _cell(x: Any) -> Any:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return x


@_io_retry
def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    rows = list(rows)
    with _atomic(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])


@_io_retry
def write_json(path: str, doc: Dict[str, Any]):
    with _atomic(path) as f:
        json.dump(doc, f, indent=2, sort_keys=False, default=_json_default)
        f.write("\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def read_series(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


@_io_retry
def write_particles(path: str, ensemble: ParticleEnsemble):
    """Little-endian records (x[d], v[d], w) after the 16-byte header magic/version/count."""
    d = ensemble.x.shape[1] if ensemble.x.ndim == 2 else 0
    records = np.column_stack([ensemble.x, ensemble.v, ensemble.w]) if ensemble.count else np.zeros((0, 2 * d + 1))
    with _atomic(path, "wb") as f:
        f.write(_HEADER.pack(PARTICLE_MAGIC, PARTICLE_VERSION, ensemble.count))
        f.write(np.ascontiguousarray(records, dtype="<f8").tobytes())


def read_particles(path: str, d: int) -> ParticleEnsemble:
    with open(path, "rb") as f:
        blob = f.read()
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != PARTICLE_MAGIC or version != PARTICLE_VERSION:
        raise ValueError(f"{path}: not a particle snapshot (magic={magic!r}, version={version})")
    rec = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(count, 2 * d + 1)
    return ParticleEnsemble(x=rec[:, :d].copy(), v=rec[:, d:2 * d].copy(), w=rec[:, 2 * d].copy())


@_io_retry
def write_fluid(path: str, fluid: FluidState):
    arrays = {"rho": fluid.rho, "p": fluid.p, "t": np.array(fluid.t)}
    for a, comp in enumerate(fluid.u):
        arrays[f"u{a + 1}"] = comp
    with _atomic(path, "wb") as f:
        np.savez(f, **arrays)


def read_fluid(path: str) -> FluidState:
    with np.load(path) as z:
        d = z["rho"].ndim
        return FluidState(rho=z["rho"], u=tuple(z[f"u{a + 1}"] for a in range(d)), p=z["p"], t=float(z["t"]))
