# Copyright (c) 2026 Jamal2367
# Licensed under the MIT License. See LICENSE file in the project root for full license information.
"""
File helpers shared by the dataset, checkpoint and metrics writers.
"""
import os
import tempfile


def ensure_dir(path):
    """Create ``path`` (and its parents) if it does not exist yet. Returns it."""
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def atomic_write_bytes(path, payload):
    """
    Write ``payload`` to ``path`` atomically.

    The bytes go to a temp file in the same directory, are fsynced and then
    swapped into place with ``os.replace``, so a run killed mid-write leaves
    the previous file intact instead of a truncated one.
    """
    dir_name = os.path.dirname(os.path.abspath(path))
    ensure_dir(dir_name)
    fd, tmp_path = tempfile.mkstemp(dir=dir_name, prefix='.' + os.path.basename(path) + '_',
                                    suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
        tmp_path = None
    finally:
        if tmp_path and os.path.exists(tmp_path):
            try:
                os.unlink(tmp_path)
            except OSError:
                pass


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode('utf-8'))
