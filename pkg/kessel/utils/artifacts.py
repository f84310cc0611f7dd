"""
Run artifacts
Atomic file writes, the snapshot binary format, ledger CSV and meta.json.

Snapshot record layout (little-endian):
    8s   magic b"KSSNAP01"
    20s  SHA-1 digest of the grid descriptor
    d    time t
    q    cell count N
    N×d  u values
    N×d  v values
Records are concatenated in one snaps.bin file.
"""

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple, Union

import numpy as np
import pandas as pd

from kessel.utils.logger import get_logger

logger = get_logger(__name__)

SNAPSHOT_MAGIC = b"KSSNAP01"
SNAPSHOT_HEADER = struct.Struct('<8s20sdq')

LEDGER_FILE = 'ledger.csv'
SNAPSHOT_FILE = 'snaps.bin'
META_FILE = 'meta.json'

PathLike = Union[str, Path]


@contextmanager
def atomic_open(path: PathLike, mode: str = 'w') -> Iterator[Any]:
    """Write to a temporary sibling and move it into place on success"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def run_directory(out_dir: PathLike, scenario: str, eps: float) -> Path:
    """runs/<scenario>/<eps>/"""
    return Path(out_dir) / scenario / f"{eps:.6g}"


def encode_snapshot(grid_hash: bytes, t: float, u: np.ndarray, v: np.ndarray) -> bytes:
    if len(grid_hash) != 20:
        raise ValueError("grid hash must be a 20-byte SHA-1 digest")
    if u.shape != v.shape:
        raise ValueError("u and v must have the same length")
    header = SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, grid_hash, float(t), int(u.size))
    return header + np.asarray(u, dtype='<f8').tobytes() + np.asarray(v, dtype='<f8').tobytes()


class SnapshotWriter:
    """Appends snapshot records; the file appears only when the writer closes"""

    def __init__(self, path: PathLike, grid_hash: bytes):
        self.path = Path(path)
        self.grid_hash = grid_hash
        self.count = 0
        self._context = atomic_open(self.path, 'wb')
        self._handle = self._context.__enter__()

    def write(self, t: float, u: np.ndarray, v: np.ndarray):
        self._handle.write(encode_snapshot(self.grid_hash, t, u, v))
        self.count += 1

    def close(self):
        if self._context is not None:
            self._context.__exit__(None, None, None)
            self._context = None
            logger.debug(f"Wrote {self.count} snapshots to {self.path}")

    def __enter__(self) -> 'SnapshotWriter':
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def read_snapshots(path: PathLike, grid_hash: bytes = None) -> List[Tuple[float, np.ndarray, np.ndarray]]:
    """
    Read every record of a snaps.bin file.

    Raises:
        ValueError: bad magic, truncated record, or a grid hash mismatch
    """
    data = Path(path).read_bytes()
    records = []
    offset = 0
    while offset < len(data):
        if offset + SNAPSHOT_HEADER.size > len(data):
            raise ValueError(f"Truncated snapshot header at byte {offset}")
        magic, digest, t, count = SNAPSHOT_HEADER.unpack_from(data, offset)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"Bad snapshot magic {magic!r} at byte {offset}")
        if grid_hash is not None and digest != grid_hash:
            raise ValueError("Snapshot grid descriptor does not match the expected grid")
        offset += SNAPSHOT_HEADER.size
        body = 16 * count
        if offset + body > len(data):
            raise ValueError(f"Truncated snapshot body at byte {offset}")
        values = np.frombuffer(data, dtype='<f8', count=2 * count, offset=offset)
        records.append((t, values[:count].copy(), values[count:].copy()))
        offset += body
    return records


def write_ledger(path: PathLike, frame: pd.DataFrame):
    with atomic_open(path, 'w') as handle:
        frame.to_csv(handle, index=False, float_format='%.17g')


def read_ledger(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def write_json(path: PathLike, payload: Dict[str, Any]):
    with atomic_open(path, 'w') as handle:
        json.dump(payload, handle, indent=2, sort_keys=False, default=_json_default)
        handle.write('\n')


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, 'r') as handle:
        return json.load(handle)


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")
