import os
from contextlib import contextmanager

from grhrnn.common.errors import HrnnError

LOCK_NAME = ".lock"


@contextmanager
def output_lock(output_dir: str):
    """
    One process per output directory: the lock file is created exclusively and removed on exit
    """
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, LOCK_NAME)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise HrnnError(f"Output directory {output_dir} is locked by another run ({path})")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        os.remove(path)
