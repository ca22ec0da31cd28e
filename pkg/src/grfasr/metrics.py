"""Character error rate scoring."""

import numpy as np

from . import kernels


def _as_ids(seq):
    if isinstance(seq, str):
        return np.fromiter((ord(c) for c in seq), dtype=np.int64, count=len(seq))
    return np.asarray(list(seq), dtype=np.int64)


def edit_distance(hyp, ref):
    """Levenshtein distance (unit-cost substitution, insertion, deletion)."""
    return kernels.edit_distance(_as_ids(hyp), _as_ids(ref))


def cer(hyp, ref):
    """100 * edit_distance / len(ref) for one pair."""
    if len(ref) == 0:
        raise ValueError("CER undefined for an empty reference")
    return 100.0 * edit_distance(hyp, ref) / len(ref)


def corpus_cer(pairs):
    """Total edits over total reference length, in percent, for ``(hyp, ref)`` pairs."""
    edits = 0
    total = 0
    for hyp, ref in pairs:
        edits += edit_distance(hyp, ref)
        total += len(ref)
    if total == 0:
        raise ValueError("CER undefined for empty references")
    return 100.0 * edits / total
