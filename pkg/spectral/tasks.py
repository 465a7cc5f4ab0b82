from __future__ import annotations

import numpy as np
from celery import shared_task

from common.exceptions import FokasError

from .direct import encode, run_chunk


@shared_task(bind=True, autoretry_for=(Exception,), dont_autoretry_for=(FokasError,), retry_backoff=True, max_retries=5)
def scatter_chunk_task(self, kind: str, payload: dict, lam_parts: list[list[float]]) -> list[dict]:
    lam = np.array([complex(re, im) for re, im in lam_parts])
    return [encode(values) for values in run_chunk(kind, payload, lam)]
