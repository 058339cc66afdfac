from typing import Iterable, Optional

from tqdm import tqdm


# Toggled by main.py --quiet
SHOW_PROGRESS: bool = True


def set_progress_enabled(enabled: bool) -> None:
    global SHOW_PROGRESS
    SHOW_PROGRESS = enabled


def progress(iterable: Iterable, desc: Optional[str] = None, total: Optional[int] = None, leave: bool = False) -> tqdm:
    return tqdm(iterable, desc=desc, total=total, leave=leave, disable=not SHOW_PROGRESS, dynamic_ncols=True)
