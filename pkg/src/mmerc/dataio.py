"""Conversation corpora: JSON Lines storage, validation, synthesis and splits.

Line 1 of a corpus file is the metadata record
``{"d_a", "d_v", "d_l", "M", "N_S", "label_names"}``; every following line is
one conversation ``{"id", "utterances": [{"speaker", "label", "audio",
"visual", "text"}]}`` where ``text`` is a token matrix (one row when pooled).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


@dataclass(frozen=True)
class CorpusMeta:
    d_a: int = 100
    d_v: int = 512
    d_l: int = 768
    M: int = 6
    N_S: int = 2
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("d_a", "d_v", "d_l", "M", "N_S"):
            if int(getattr(self, name)) < 1:
                raise CorpusError(f"meta field {name} must be positive")
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(f"class{k}" for k in range(self.M)))
        if len(self.label_names) != self.M:
            raise CorpusError(f"label_names has {len(self.label_names)} entries, M={self.M}")

    def to_json(self) -> dict:
        return {"d_a": self.d_a, "d_v": self.d_v, "d_l": self.d_l, "M": self.M,
                "N_S": self.N_S, "label_names": list(self.label_names)}

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusMeta":
        try:
            return cls(d_a=int(obj["d_a"]), d_v=int(obj["d_v"]), d_l=int(obj["d_l"]),
                       M=int(obj["M"]), N_S=int(obj["N_S"]),
                       label_names=tuple(obj.get("label_names") or ()))
        except KeyError as exc:
            raise CorpusError(f"metadata record missing field {exc.args[0]!r}") from None


@dataclass
class Utterance:
    index: int
    speaker: int
    label: int
    audio: np.ndarray
    visual: np.ndarray
    text: np.ndarray  # (T, d_l)

    @property
    def text_pooled(self) -> np.ndarray:
        return self.text.mean(axis=0)


@dataclass
class Conversation:
    id: str
    utterances: list[Utterance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> np.ndarray:
        return np.array([u.speaker for u in self.utterances], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=np.int64)

    def features(self, modality: str) -> np.ndarray:
        """Stacked per-utterance features, shape (N, d); text is token-pooled."""
        if modality == "a":
            return np.stack([u.audio for u in self.utterances])
        if modality == "v":
            return np.stack([u.visual for u in self.utterances])
        if modality == "l":
            return np.stack([u.text_pooled for u in self.utterances])
        raise ValueError(f"unknown modality {modality!r}")


Corpus = tuple[CorpusMeta, list[Conversation]]


def validate(meta: CorpusMeta, conv: Conversation) -> None:
    if not conv.utterances:
        raise CorpusError(f"conversation {conv.id}: no utterances")
    for i, u in enumerate(conv.utterances):
        where = f"conversation {conv.id} utterance {i}"
        if u.index != i:
            raise CorpusError(f"{where}: index {u.index} breaks contiguous order")
        if not 0 <= u.label < meta.M:
            raise CorpusError(f"{where}: unknown label id {u.label} (M={meta.M})")
        if not 0 <= u.speaker < meta.N_S:
            raise CorpusError(f"{where}: speaker id {u.speaker} outside [0, {meta.N_S})")
        for name, arr, want in (("audio", u.audio, (meta.d_a,)),
                                ("visual", u.visual, (meta.d_v,))):
            if arr.shape != want:
                raise CorpusError(f"{where}: {name} has length {arr.shape}, expected {want[0]}")
        if u.text.ndim != 2 or u.text.shape[0] < 1 or u.text.shape[1] != meta.d_l:
            raise CorpusError(f"{where}: text has shape {u.text.shape}, expected (T, {meta.d_l})")
        for name, arr in (("audio", u.audio), ("visual", u.visual), ("text", u.text)):
            if not np.all(np.isfinite(arr)):
                raise CorpusError(f"{where}: non-finite value in {name}")


def _parse_conversation(obj: dict, lineno: int) -> Conversation:
    try:
        utts = []
        for i, u in enumerate(obj["utterances"]):
            text = np.asarray(u["text"], dtype=np.float64)
            if text.ndim == 1:
                text = text[None, :]
            utts.append(Utterance(index=i, speaker=int(u["speaker"]), label=int(u["label"]),
                                  audio=np.asarray(u["audio"], dtype=np.float64),
                                  visual=np.asarray(u["visual"], dtype=np.float64),
                                  text=text))
        return Conversation(id=str(obj["id"]), utterances=utts)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: malformed conversation record ({exc})") from None


def load_corpus(path: str | Path) -> Corpus:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not records:
        raise CorpusError(f"{path}: missing metadata record")
    meta = CorpusMeta.from_json(records[0][1])
    convs = []
    for lineno, obj in records[1:]:
        conv = _parse_conversation(obj, lineno)
        try:
            validate(meta, conv)
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
        convs.append(conv)
    return meta, convs


def dumps_corpus(meta: CorpusMeta, convs: Iterable[Conversation]) -> str:
    lines = [json.dumps(meta.to_json())]
    for c in convs:
        lines.append(json.dumps({
            "id": c.id,
            "utterances": [{"speaker": u.speaker, "label": u.label,
                            "audio": u.audio.tolist(), "visual": u.visual.tolist(),
                            "text": u.text.tolist()} for u in c.utterances],
        }))
    return "\n".join(lines) + "\n"


def write_corpus(path: str | Path, meta: CorpusMeta, convs: Iterable[Conversation]) -> None:
    Path(path).write_text(dumps_corpus(meta, convs), encoding="utf-8")


def synth_corpus(n_conversations: int, len_range: tuple[int, int] = (5, 15),
                 n_speakers: int = 2, meta: CorpusMeta | None = None, seed: int = 0,
                 mu: float = 3.0, noise: float = 1.0, text_tokens: int = 1) -> Corpus:
    """Random conversations with a planted class signal.

    Class k adds ``mu`` to coordinate block k of every modality (block width
    ``d // M``), on top of N(0, noise^2) features, so a nearest-centroid rule
    separates the classes once ``mu`` dominates the noise.
    """
    lo, hi = len_range
    if n_conversations < 0 or lo < 1 or hi < lo:
        raise CorpusError(f"degenerate synthesis ranges: n={n_conversations}, len={len_range}")
    if n_speakers < 1 or text_tokens < 1:
        raise CorpusError("need at least one speaker and one text token")
    meta = meta or CorpusMeta()
    if meta.N_S != n_speakers:
        meta = CorpusMeta(meta.d_a, meta.d_v, meta.d_l, meta.M, n_speakers, meta.label_names)
    for d in (meta.d_a, meta.d_v, meta.d_l):
        if d < meta.M:
            raise CorpusError(f"feature width {d} too small to plant {meta.M} class blocks")
    rng = np.random.default_rng(seed)

    def planted(d: int, label: int, rows: int | None = None) -> np.ndarray:
        shape = (d,) if rows is None else (rows, d)
        x = rng.normal(0.0, noise, size=shape)
        b = d // meta.M
        x[..., label * b:(label + 1) * b] += mu
        return x

    convs = []
    for c in range(n_conversations):
        n = int(rng.integers(lo, hi + 1))
        utts = []
        for i in range(n):
            label = int(rng.integers(meta.M))
            speaker = int(rng.integers(n_speakers))
            utts.append(Utterance(index=i, speaker=speaker, label=label,
                                  audio=planted(meta.d_a, label),
                                  visual=planted(meta.d_v, label),
                                  text=planted(meta.d_l, label, rows=text_tokens)))
        convs.append(Conversation(id=f"synth{c:04d}", utterances=utts))
    return meta, convs


def split(convs: Sequence[Conversation], ratios: Sequence[float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[list[Conversation], list[Conversation], list[Conversation]]:
    """Shuffle whole conversations and cut into train/valid/test by ``ratios``."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(convs)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(ratios[0] * n + 1e-9))
    n_valid = int(math.floor(ratios[1] * n + 1e-9))
    picked = [convs[k] for k in order]
    return picked[:n_train], picked[n_train:n_train + n_valid], picked[n_train + n_valid:]


def nearest_centroid_accuracy(meta: CorpusMeta, train: Sequence[Conversation],
                              test: Sequence[Conversation] | None = None) -> float:
    """Accuracy of a per-utterance nearest-centroid rule on raw concatenated features."""
    def stack(convs):
        xs = [np.concatenate([c.features("a"), c.features("v"), c.features("l")], axis=1)
              for c in convs]
        ys = [c.labels for c in convs]
        return np.concatenate(xs), np.concatenate(ys)

    x, y = stack(train)
    centroids = np.zeros((meta.M, x.shape[1]))
    for k in range(meta.M):
        if np.any(y == k):
            centroids[k] = x[y == k].mean(axis=0)
        else:
            centroids[k] = np.inf
    xt, yt = stack(test) if test is not None else (x, y)
    d2 = ((xt[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(d2.argmin(axis=1) == yt))
