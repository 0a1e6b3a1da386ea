"""Injectable time source so services and tests agree on "now"."""

from __future__ import annotations

import datetime as dt


class Clock:
    """Time source interface. All timestamps in the system are UTC."""

    def now(self) -> dt.datetime:
        raise NotImplementedError

    def today(self) -> dt.date:
        return self.now().date()

    def day_stamp(self) -> str:
        """ISO day used to scope daily cache keys."""
        return self.today().isoformat()


class SystemClock(Clock):
    def now(self) -> dt.datetime:
        return dt.datetime.now(dt.timezone.utc)


class ManualClock(Clock):
    """Fixed clock for tests; advance explicitly."""

    def __init__(self, start: dt.datetime):
        if start.tzinfo is None:
            start = start.replace(tzinfo=dt.timezone.utc)
        self._now = start

    def now(self) -> dt.datetime:
        return self._now

    def set(self, moment: dt.datetime) -> None:
        if moment.tzinfo is None:
            moment = moment.replace(tzinfo=dt.timezone.utc)
        self._now = moment

    def advance(self, seconds: float = 0.0, days: int = 0) -> None:
        self._now = self._now + dt.timedelta(seconds=seconds, days=days)
