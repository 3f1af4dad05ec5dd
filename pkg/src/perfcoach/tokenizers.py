"""Tokenizers trained on the instruction corpus.

BpeTokenizer is a byte-pair-encoding subword tokenizer in the
sentencepiece style: words are pre-split on whitespace and prefixed with
the word-start marker U+2581, so token sequences of separate texts
concatenate cleanly. WordTokenizer is a plain vocabulary lookup used by
the aligner's lightweight text path.
"""

from __future__ import annotations

import json
from collections import Counter

from .errors import InvalidInput

WORD_START = "▁"
SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")


class BpeTokenizer:
    def __init__(self, vocab: list[str], merges: list[tuple[str, str]]):
        self.vocab = list(vocab)
        self.merges = [tuple(m) for m in merges]
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        if len(self.token_to_id) != len(self.vocab):
            raise InvalidInput("duplicate tokens in vocab")
        for s in SPECIALS:
            if s not in self.token_to_id:
                raise InvalidInput(f"missing special token {s}")
        self._rank = {m: i for i, m in enumerate(self.merges)}

    # -- ids ---------------------------------------------------------------
    @property
    def pad_id(self) -> int:
        return self.token_to_id["<pad>"]

    @property
    def unk_id(self) -> int:
        return self.token_to_id["<unk>"]

    @property
    def bos_id(self) -> int:
        return self.token_to_id["<bos>"]

    @property
    def eos_id(self) -> int:
        return self.token_to_id["<eos>"]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    # -- training ----------------------------------------------------------
    @classmethod
    def train(cls, texts, num_merges: int = 300) -> "BpeTokenizer":
        """Learn merges by repeatedly fusing the most frequent adjacent
        pair; ties break toward the lexicographically smaller pair."""
        word_freq = Counter()
        for text in texts:
            word_freq.update(text.split())
        words = {w: list(WORD_START + w) for w in word_freq}

        alphabet = sorted({c for sym in words.values() for c in sym})
        merges: list[tuple[str, str]] = []
        for _ in range(num_merges):
            pairs = Counter()
            for w, sym in words.items():
                f = word_freq[w]
                for a, b in zip(sym, sym[1:]):
                    pairs[(a, b)] += f
            if not pairs:
                break
            best_freq = max(pairs.values())
            if best_freq < 2:
                break
            pair = min(p for p, f in pairs.items() if f == best_freq)
            merges.append(pair)
            fused = pair[0] + pair[1]
            for w, sym in words.items():
                out, i = [], 0
                while i < len(sym):
                    if i + 1 < len(sym) and (sym[i], sym[i + 1]) == pair:
                        out.append(fused)
                        i += 2
                    else:
                        out.append(sym[i])
                        i += 1
                words[w] = out

        vocab = list(SPECIALS) + alphabet + [a + b for a, b in merges]
        seen = set()
        vocab = [t for t in vocab if not (t in seen or seen.add(t))]
        return cls(vocab, merges)

    # -- encode / decode ----------------------------------------------------
    def _encode_word(self, word: str) -> list[int]:
        sym = list(WORD_START + word)
        while len(sym) > 1:
            ranked = [
                (self._rank[(a, b)], i)
                for i, (a, b) in enumerate(zip(sym, sym[1:]))
                if (a, b) in self._rank
            ]
            if not ranked:
                break
            _, i = min(ranked)
            sym = sym[:i] + [sym[i] + sym[i + 1]] + sym[i + 2 :]
        return [self.token_to_id.get(s, self.unk_id) for s in sym]

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in text.split():
            ids.extend(self._encode_word(word))
        return ids

    def decode(self, ids) -> str:
        skip = {self.pad_id, self.bos_id, self.eos_id}
        parts = [self.vocab[i] for i in ids if 0 <= i < len(self.vocab) and i not in skip]
        return "".join(parts).replace(WORD_START, " ").strip()

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": "bpe", "vocab": self.vocab, "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, d: dict) -> "BpeTokenizer":
        if d.get("kind") != "bpe":
            raise InvalidInput("not a bpe tokenizer payload")
        return cls(d["vocab"], [tuple(m) for m in d["merges"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "BpeTokenizer":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class WordTokenizer:
    """Whitespace word-level tokenizer with lowercase normalization."""

    def __init__(self, vocab: list[str]):
        self.vocab = list(vocab)
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        for s in SPECIALS:
            if s not in self.token_to_id:
                raise InvalidInput(f"missing special token {s}")

    @property
    def pad_id(self) -> int:
        return self.token_to_id["<pad>"]

    @property
    def unk_id(self) -> int:
        return self.token_to_id["<unk>"]

    @property
    def bos_id(self) -> int:
        return self.token_to_id["<bos>"]

    @property
    def eos_id(self) -> int:
        return self.token_to_id["<eos>"]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @classmethod
    def train(cls, texts, max_words: int = 2000) -> "WordTokenizer":
        freq = Counter()
        for text in texts:
            freq.update(w.lower() for w in text.split())
        keep = sorted(freq, key=lambda w: (-freq[w], w))[:max_words]
        return cls(list(SPECIALS) + sorted(keep))

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(w.lower(), self.unk_id) for w in text.split()]

    def decode(self, ids) -> str:
        skip = {self.pad_id, self.bos_id, self.eos_id}
        return " ".join(
            self.vocab[i] for i in ids if 0 <= i < len(self.vocab) and i not in skip
        )

    def to_dict(self) -> dict:
        return {"kind": "word", "vocab": self.vocab}

    @classmethod
    def from_dict(cls, d: dict) -> "WordTokenizer":
        if d.get("kind") != "word":
            raise InvalidInput("not a word tokenizer payload")
        return cls(d["vocab"])
