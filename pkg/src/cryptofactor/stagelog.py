"""Machine-readable record of everything a stage skipped or dropped."""

import logging
from dataclasses import asdict, dataclass

import pandas as pd

logger = logging.getLogger("cryptofactor")

COLUMNS = ["stage", "reason", "coin_id", "period", "detail"]


@dataclass(frozen=True)
class LogEntry:
    stage: str
    reason: str
    coin_id: str = ""
    period: str = ""
    detail: str = ""


class StageLog:
    """Append-only list of skip/drop events.

    Reason codes are short upper-case identifiers (``GAP``, ``TOO_FEW_COINS``,
    ``MISSING_SIZE`` ...). Each event is recorded once; callers are expected
    not to log the same (stage, reason, coin, period) twice.
    """

    def __init__(self):
        self.entries = []

    def add(self, stage, reason, coin_id="", period="", detail=""):
        entry = LogEntry(stage, reason, str(coin_id), str(period), str(detail))
        self.entries.append(entry)
        logger.debug("%s %s coin=%s period=%s %s", stage, reason, coin_id, period, detail)

    def extend(self, other):
        self.entries.extend(other.entries)

    def count(self, reason=None, stage=None):
        return sum(
            1 for e in self.entries
            if (reason is None or e.reason == reason) and (stage is None or e.stage == stage)
        )

    def to_frame(self):
        if not self.entries:
            return pd.DataFrame(columns=COLUMNS)
        return pd.DataFrame([asdict(e) for e in self.entries], columns=COLUMNS)

    def __len__(self):
        return len(self.entries)
