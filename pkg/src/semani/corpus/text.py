"""Word-level tokenizer over the closed caption vocabulary.

Layout: id 0 is UNK, content words follow, then one padding id per sequence
position so unused slots carry position-specific ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from semani.corpus import shapes

UNK = "<unk>"
UNK_ID = 0

# "background" is not produced by captions; it anchors token-level scoring
CONTENT_WORDS = (
    ("a", "and")
    + shapes.SIZES
    + shapes.TEXTURES
    + shapes.SHAPES
    + shapes.COLOR_NAMES
    + ("background",)
)


@dataclass(frozen=True)
class TextTokens:
    ids: np.ndarray  # (l_max,) int64
    length: int
    vocabulary_size: int
    truncated: bool = False

    def __post_init__(self):
        if self.ids.min() < 0 or self.ids.max() >= self.vocabulary_size:
            raise ValueError("token id outside vocabulary")


class Vocabulary:
    def __init__(self, l_max: int = 32):
        self.l_max = l_max
        self.words = CONTENT_WORDS
        self._word_to_id = {w: i + 1 for i, w in enumerate(self.words)}

    @property
    def size(self) -> int:
        return 1 + len(self.words) + self.l_max

    def pad_id(self, position: int) -> int:
        return 1 + len(self.words) + position

    def word_id(self, word: str) -> int:
        return self._word_to_id.get(word, UNK_ID)

    def tokenize(self, caption: str) -> TextTokens:
        words = caption.lower().split()
        truncated = len(words) > self.l_max
        words = words[: self.l_max]
        ids = np.array(
            [self.word_id(w) for w in words]
            + [self.pad_id(p) for p in range(len(words), self.l_max)],
            dtype=np.int64,
        )
        return TextTokens(ids=ids, length=len(words), vocabulary_size=self.size, truncated=truncated)

    def detokenize(self, tokens: TextTokens) -> str:
        out = []
        for i in range(tokens.length):
            tid = int(tokens.ids[i])
            out.append(self.words[tid - 1] if 1 <= tid <= len(self.words) else UNK)
        return " ".join(out)

    def to_dict(self) -> dict:
        return {"l_max": self.l_max, "words": list(self.words)}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        vocab = cls(l_max=int(payload["l_max"]))
        if tuple(payload["words"]) != vocab.words:
            raise ValueError("vocabulary word list does not match this build")
        return vocab
