from typing import Dict, Iterable, Optional
from timeit import default_timer as timer


class SingleTimer():
    """Wall-clock timer, unit in ms"""
    def __init__(self):
        self.start_time: Optional[float] = timer()
        self.stop_time: Optional[float] = None

    @property
    def current_time(self) -> float:
        if self.start_time is None:
            raise ValueError("Timer is not started")
        return (timer() - self.start_time) * 1e3

    def start(self) -> None:
        self.start_time = timer()
        self.stop_time = None

    def get_time_and_restart(self) -> float:
        t = self.current_time
        self.start_time = timer()
        return t

    def stop(self) -> None:
        self.stop_time = timer()

    def get_start_to_stop(self) -> float:
        if self.stop_time is None:
            raise ValueError("Timer is not stopped")
        return (self.stop_time - self.start_time) * 1e3

    def __repr__(self):
        return f"{self.current_time:.2f} ms"


class MultipleTimer():
    """
    Named timers plus a "main" timer started at creation, unit in ms
    """
    def __init__(self, each_timer_name: Optional[Iterable[str]] = None):
        self.__timers_collection: Dict[str, SingleTimer] = {}
        self.new_timer("main")

        if each_timer_name is not None:
            for timer_name in each_timer_name:
                self.new_timer(timer_name)

        self.restart_all()

    @property
    def timer(self) -> Dict[str, SingleTimer]:
        return self.__timers_collection

    @property
    def main(self) -> SingleTimer:
        return self.__timers_collection["main"]

    def new_timer(self, name: str) -> SingleTimer:
        if name not in self.__timers_collection:
            self.__timers_collection[name] = SingleTimer()
        return self.__timers_collection[name]

    def stopped_times(self) -> Dict[str, float]:
        """Start-to-stop time of every stopped timer except main."""
        return {
            name: t.get_start_to_stop()
            for name, t in self.__timers_collection.items()
            if name != "main" and t.stop_time is not None
        }

    def restart_all(self) -> None:
        start = timer()
        for each_timer in self.__timers_collection.values():
            each_timer.start_time = start
            each_timer.stop_time = None

    def __repr__(self) -> str:
        return str({name: t.current_time for name, t in self.__timers_collection.items()})


def format_runtime(ms: float) -> str:
    if ms < 1e4:
        return f"{ms:.2f} ms"
    return f"{ms / 1e3:.3f} s"
