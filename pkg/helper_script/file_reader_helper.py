import os
from typing import Callable, List, Optional, Union

from modules_script.m_errors import StageDependencyError


def read_from_file(path: str, reader_function: Optional[Callable] = None, binary: bool = False, **kwargs):
    """Returns None when the file does not exist."""
    if not os.path.exists(path):
        return None

    if reader_function is None:
        with open(path, "rb" if binary else "r") as f:
            return f.read()

    return reader_function(path, **kwargs)


def read_lines(path: str, encoding: str = "utf-8") -> Optional[List[str]]:
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding=encoding) as f:
        return f.read().splitlines()


def write_to_file(path: str, content: Union[str, bytes, None] = None, overwrite: bool = False) -> None:
    if content is None:
        raise ValueError("No content given")

    if not overwrite and os.path.exists(path):
        raise FileExistsError(f"File {path} already exists")

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    # "\n" line endings on every platform
    if isinstance(content, bytes):
        with open(path, "wb") as f:
            f.write(content)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(content)


def require_file(path: str, produced_by: str) -> str:
    """Raise StageDependencyError naming the CLI stage that should have produced ``path``."""
    if not os.path.exists(path):
        raise StageDependencyError(f"{path} not found; run `{produced_by}` first")
    return path
