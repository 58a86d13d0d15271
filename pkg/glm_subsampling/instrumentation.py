import json
import logging
from datetime import datetime
from typing import Any, Optional

from pydantic import BaseModel


class RunStats(BaseModel):
    """Running counters for a batch of repetitions."""

    usage_count: int = 0
    success_count: int = 0
    error_count: int = 0
    last_run: Optional[datetime] = None
    average_wall_time: float = 0.0

    def record(self, success: bool, wall_time: float):
        if success:
            self.success_count += 1
        else:
            self.error_count += 1
        self.usage_count += 1
        self.last_run = datetime.now()
        self.average_wall_time = (
            (self.average_wall_time * (self.usage_count - 1) + wall_time) / self.usage_count
        )


def log_execution(
    logger: logging.Logger,
    event: str,
    success: bool,
    execution_time: float,
    error: Optional[str] = None,
    **fields: Any,
):
    """Emit a one-line JSON record for a finished unit of work."""
    log_data = {
        "event": event,
        "success": success,
        "execution_time": execution_time,
        "timestamp": datetime.now().isoformat(),
    }
    log_data.update(fields)
    if error:
        log_data["error"] = error

    if success:
        logger.info(json.dumps(log_data, default=str))
    else:
        logger.error(json.dumps(log_data, default=str))
