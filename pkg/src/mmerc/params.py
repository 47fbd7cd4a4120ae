"""Named parameter store shared by all layers.

Parameters are ``Tensor`` leaves keyed by dotted path, e.g.
``pcm.l_to_a.layer0.Wq``. Initialisation order follows the order in which
layers register, so a fixed seed reproduces every weight bit for bit.
"""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .numerics import Tensor


def subtree(params: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    """Entries under ``prefix.`` with the prefix stripped."""
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in params.items() if k.startswith(prefix + ".")}


class ParamStore(Mapping[str, Tensor]):
    def __init__(self, rng: np.random.Generator | None = None):
        self._params: dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __getitem__(self, key: str) -> Tensor:
        return self._params[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def add(self, path: str, value: np.ndarray) -> Tensor:
        if path in self._params:
            raise KeyError(f"duplicate parameter path {path}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[path] = t
        return t

    def glorot(self, path: str, shape: tuple[int, int]) -> Tensor:
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        return self.add(path, self.rng.uniform(-limit, limit, size=shape))

    def zeros(self, path: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(path, np.zeros(shape))

    def ones(self, path: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(path, np.ones(shape))

    def normal(self, path: str, shape: tuple[int, ...], std: float) -> Tensor:
        return self.add(path, self.rng.normal(0.0, std, size=shape))

    def count(self, prefix: str = "") -> int:
        return sum(v.data.size for k, v in self._params.items()
                   if not prefix or k == prefix or k.startswith(prefix + "."))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(arrays)
        if missing:
            raise KeyError(f"checkpoint/model parameter mismatch: {sorted(missing)[:5]}")
        for k, t in self._params.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {arrays[k].shape}, model {t.shape}")
            t.data = np.array(arrays[k], dtype=np.float64)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None
