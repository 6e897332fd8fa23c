"""
Selftest handler
"""

import logging
from typing import Any, Dict

from core.selftest import run_selftest
from results_store import ResultStore
from utils.messages import MessageTemplates

logger = logging.getLogger(__name__)


class SelftestHandlers:
    def __init__(self, store: ResultStore, messages: MessageTemplates):
        self.store = store
        self.messages = messages

    def selftest_command(self, settings: Dict[str, Any]) -> int:
        """Exit 0 when every check passes, 2 otherwise"""
        results = run_selftest(int(settings["seed"]), quick=bool(settings.get("quick", False)))
        print(self.messages.format_selftest(results))
        if all(r.passed for r in results):
            logger.info("Selftest passed")
            return 0
        return 2
