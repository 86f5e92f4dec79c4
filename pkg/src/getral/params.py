"""Parameter containers.

Model parameters live as plain float64 arrays inside dataclasses that mix
in :class:`ParamGroup`. Each training step watches them onto a fresh tape
via ``group.map(tape.watch)``, which rebuilds the same dataclass with
Tensor leaves; ``named()`` gives the stable name -> leaf walk used by the
optimizer and the checkpoint format.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import Tensor


class ParamGroup:
    """Mixin for dataclasses whose fields are arrays, nested groups, or
    lists of nested groups. Non-array leaves (ints, floats, bools) pass
    through untouched."""

    def map(self, fn):
        updates = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            updates[f.name] = _map_value(value, fn)
        return dataclasses.replace(self, **updates)

    def named(self, prefix=""):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            yield from _named_value(value, f"{prefix}{f.name}")

    def copy(self):
        return self.map(lambda arr: np.array(arr, copy=True))


def rebuild(group: ParamGroup, leaves_by_name: dict):
    """Copy of ``group`` with each leaf replaced by ``leaves_by_name[name]``.

    Relies on ``map`` and ``named`` walking fields in the same order.
    """
    names = iter(name for name, _ in group.named())
    return group.map(lambda _leaf: leaves_by_name[next(names)])


def _is_leaf(value):
    return isinstance(value, (np.ndarray, Tensor))


def _map_value(value, fn):
    if isinstance(value, ParamGroup):
        return value.map(fn)
    if isinstance(value, list):
        return [_map_value(v, fn) for v in value]
    if _is_leaf(value):
        return fn(value)
    return value


def _named_value(value, name):
    if isinstance(value, ParamGroup):
        yield from value.named(f"{name}.")
    elif isinstance(value, list):
        for i, v in enumerate(value):
            yield from _named_value(v, f"{name}.{i}")
    elif _is_leaf(value):
        yield name, value
