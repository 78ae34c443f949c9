"""通用批处理器模块

按输入顺序处理一组条目（例如各个视频片段），单个条目失败不会中断整个批次。
可选的线程池并行执行，结果顺序始终与输入顺序一致。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar, Generic, Any, Tuple
from dataclasses import dataclass

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


@dataclass
class BatchResult(Generic[T, R]):
    total: int
    succeeded: int
    failed: int
    results: List[R]
    failures: List[tuple]
    success: bool = True


class BatchProcessor(Generic[T, R]):

    def __init__(
        self,
        processor_fn: Callable[[T, Any], R],
        label: str = "Batch",
        log_item_name: Callable[[int, T], str] = None,
        threads: int = 1,
    ):
        self.processor_fn = processor_fn
        self.label = label
        self.log_item_name = log_item_name or (lambda idx, item: f"[{idx}]")
        self.threads = max(1, int(threads))

    def _run_one(self, idx: int, item: T, total: int, kwargs: dict) -> Tuple[bool, Any]:
        item_name = self.log_item_name(idx, item)
        logger.info("%s %d/%d: %s", self.label, idx, total, item_name)
        try:
            return True, self.processor_fn(item, **kwargs)
        except Exception as e:
            logger.error("%s %s failed: %s", self.label, item_name, e)
            logger.debug("Details", exc_info=True)
            return False, e

    def process(
        self,
        items: List[T],
        **kwargs,
    ) -> BatchResult[T, R]:
        results: List[R] = []
        failures: List[tuple] = []
        total = len(items)

        if self.threads > 1 and total > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = [
                    pool.submit(self._run_one, idx, item, total, kwargs)
                    for idx, item in enumerate(items, 1)
                ]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [self._run_one(idx, item, total, kwargs) for idx, item in enumerate(items, 1)]

        for idx, (item, (ok, value)) in enumerate(zip(items, outcomes), 1):
            if ok:
                results.append(value)
            else:
                failures.append((idx, item, str(value), value))
                results.append({'error': str(value), 'item': item})

        self._log_summary(total, total - len(failures), len(failures), failures)

        return BatchResult(
            total=total,
            succeeded=total - len(failures),
            failed=len(failures),
            results=results,
            failures=failures,
            success=len(failures) == 0,
        )

    def _log_summary(self, total: int, success: int, failed: int, failed_items: List[tuple]) -> None:
        logger.info("%s processing complete | Total: %d | Success: %d | Failed: %d",
                    self.label, total, success, failed)
        if failed_items:
            logger.warning("Failed items:")
            for item in failed_items:
                logger.warning("  [%s] %s", item[0], item[2])
