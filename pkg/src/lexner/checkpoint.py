"""Self-describing checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"LEXNERCK"
    version      uint32
    header_len   uint64
    header       header_len bytes of UTF-8 JSON
    payload      concatenated float64 ('<f8') tensors

The header holds the model config, vocabularies, tag labels, lexicon phrases
with their statistics, best dev F1, epoch, and a tensor index of
``{"name", "shape", "offset"}`` entries (offset in bytes into the payload).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from lexner.corpus import TagScheme
from lexner.embeddings import CharVocab, Vocab
from lexner.errors import CorpusError
from lexner.features import Featurizer, LmVocab
from lexner.lexicon import Lexicon, LexiconStats
from lexner.network import ModelConfig, Tagger

MAGIC = b"LEXNERCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_config: ModelConfig
    scheme: TagScheme
    vocab: Vocab
    chars: CharVocab
    lm_vocab: LmVocab
    model: Tagger
    lexicon: Optional[Lexicon] = None
    stats: Optional[LexiconStats] = None
    best_dev_f1: Optional[float] = None
    epoch: int = 0
    train_config: dict = field(default_factory=dict)

    def featurizer(self) -> Featurizer:
        return Featurizer(self.vocab, self.chars, self.lm_vocab, self.scheme,
                          self.model_config.lexicon_mode, self.lexicon, self.stats)

    def to_bytes(self) -> bytes:
        tensors, chunks, offset = [], [], 0
        for name, value in self.model.state_dict().items():
            arr = value.detach().cpu().numpy().astype("<f8", copy=False)
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
            blob = arr.tobytes(order="C")
            chunks.append(blob)
            offset += len(blob)
        header = {
            "model_config": asdict(self.model_config),
            "labels": list(self.scheme.labels),
            "vocab": self.vocab.itos,
            "chars": self.chars.itos,
            "lm_vocab": self.lm_vocab.itos,
            "lexicon": None if self.lexicon is None else {
                "phrases": self.lexicon.phrases,
                "z": None if self.stats is None else [self.stats.z.get(p, 0) for p in self.lexicon.phrases],
                "c": None if self.stats is None else self.stats.c,
                "digest": None if self.stats is None else self.stats.digest(),
            },
            "best_dev_f1": self.best_dev_f1,
            "epoch": self.epoch,
            "train_config": self.train_config,
            "tensors": tensors,
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(head)) + head + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:8] != MAGIC:
            raise CorpusError("not a checkpoint file (bad magic)")
        version, head_len = struct.unpack_from("<IQ", data, 8)
        if version != FORMAT_VERSION:
            raise CorpusError(f"unsupported checkpoint version {version}")
        start = 8 + struct.calcsize("<IQ")
        header = json.loads(data[start:start + head_len].decode("utf-8"))
        payload = memoryview(data)[start + head_len:]

        config = ModelConfig(**header["model_config"])
        vocab = _restore(Vocab(), header["vocab"])
        chars = _restore(CharVocab(), header["chars"])
        lm_vocab = LmVocab(header["lm_vocab"][1:])
        lexicon = stats = None
        lex = header["lexicon"]
        if lex is not None:
            lexicon = Lexicon(p.split(" ") for p in lex["phrases"])
            if lex["z"] is not None:
                stats = LexiconStats(dict(zip(lexicon.phrases, lex["z"])), lex["c"])
                if stats.digest() != lex["digest"]:
                    raise CorpusError("checkpoint lexicon statistics fail their digest")
        scheme = TagScheme(header["labels"])
        model = Tagger(config, len(scheme), len(vocab), len(chars), len(lm_vocab),
                       0 if lexicon is None else len(lexicon))
        state = {}
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
            state[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).astype(np.float64))
        model.load_state_dict(state)
        return cls(config, scheme, vocab, chars, lm_vocab, model, lexicon, stats,
                   header["best_dev_f1"], header["epoch"], header["train_config"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise CorpusError(f"cannot read checkpoint: {exc}") from None
        return cls.from_bytes(data)


def _restore(vocab: Vocab, itos: list[str]) -> Vocab:
    if vocab.itos != itos[:len(vocab.itos)]:
        raise CorpusError("checkpoint vocabulary has unexpected reserved entries")
    for w in itos[len(vocab.itos):]:
        vocab.add(w)
    return vocab
