"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import Any, Iterable, Sequence

from .traces import QAInstance


def check_instances(X: Iterable[Any], *, require_unique_gold: bool = False) -> list[QAInstance]:
    """Coerce ``X`` into a non-empty list of :class:`QAInstance`.

    Accepts instances or instance-file records (dicts).
    """
    if isinstance(X, (str, bytes, QAInstance)):
        raise TypeError("expected a sequence of instances, got a single value")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, QAInstance):
            out.append(x)
        elif isinstance(x, dict):
            try:
                out.append(QAInstance.from_record(x))
            except ValueError as exc:
                raise ValueError(f"X[{i}]: {exc}") from None
        else:
            raise TypeError(f"X[{i}] is {type(x).__name__}, expected QAInstance or record dict")
    if not out:
        raise ValueError("expected at least one instance")
    if require_unique_gold:
        bad = [inst.id for inst in out if not inst.has_unique_gold()]
        if bad:
            raise ValueError(f"{len(bad)} instance(s) lack a unique gold choice, e.g. {bad[0]!r}")
    return out


def check_trace_pairs(X: Iterable[Any]) -> list[tuple[str, QAInstance]]:
    """``X`` must hold ``(raw_trace, instance)`` pairs."""
    out = []
    for i, pair in enumerate(X):
        try:
            raw, inst = pair
        except (TypeError, ValueError):
            raise TypeError(f"X[{i}] is not a (raw, instance) pair") from None
        if not isinstance(raw, str):
            raise TypeError(f"X[{i}][0] must be a string")
        if not isinstance(inst, QAInstance):
            inst = check_instances([inst])[0]
        out.append((raw, inst))
    return out


def check_same_length(*seqs: Sequence[Any]) -> int:
    lengths = {len(s) for s in seqs}
    if len(lengths) > 1:
        raise ValueError(f"inconsistent lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0
