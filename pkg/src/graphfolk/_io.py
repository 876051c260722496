"""Atomic file output: stage to a temp file, rename into place on success."""

from __future__ import annotations

import os
from contextlib import contextmanager
from pathlib import Path


@contextmanager
def atomic_text_writer(path: str | Path, encoding: str = "utf-8"):
    """Yield a text handle whose contents replace `path` only if the block succeeds.

    The temp file lives in the destination directory so os.replace stays on
    one filesystem. On any exception the temp file is removed and the
    destination is left untouched.
    """
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        with open(tmp, "w", encoding=encoding, newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
