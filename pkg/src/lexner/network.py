"""Character-aware BiLSTM encoder with language-model heads and lexicon inputs.

A bidirectional character LSTM reads the sentence as one character stream
with boundary markers. Its states at the boundary after (forward) and before
(backward) each word feed three highway transforms: one for the tagging path
and one per language-model direction. The tagging features are concatenated
with the word embedding and the lexicon feature, then a word-level BiLSTM and
a linear layer produce CRF emission scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from lexner import crf
from lexner.features import LEXICON_MODES, SentenceFeatures


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 100
    char_dim: int = 30
    hidden: int = 300
    highway_depth: int = 1
    dropout: float = 0.5
    phrase_dim: int = 50
    lexicon_mode: str = "softlexicon"
    lm_vocab_cap: int = 5000

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "hidden", "highway_depth", "phrase_dim", "lm_vocab_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lexicon_mode not in LEXICON_MODES:
            raise ValueError(f"unknown lexicon_mode {self.lexicon_mode!r}")
        if self.lexicon_mode == "softlexicon" and self.phrase_dim > self.word_dim:
            # phrase vectors start from truncated word vectors
            raise ValueError(f"phrase_dim {self.phrase_dim} exceeds word_dim {self.word_dim}")

    @property
    def lexicon_dim(self) -> int:
        return {"none": 0, "exsoftword": 5, "softlexicon": 4 * self.phrase_dim}[self.lexicon_mode]


def highway_forward(x: torch.Tensor, w_h, b_h, w_t, b_t) -> torch.Tensor:
    t = torch.sigmoid(x @ w_t.T + b_t)
    return t * torch.relu(x @ w_h.T + b_h) + (1.0 - t) * x


class Highway(nn.Module):
    def __init__(self, dim: int, depth: int = 1):
        super().__init__()
        self.layers = nn.ModuleList(nn.ModuleDict({"h": nn.Linear(dim, dim), "t": nn.Linear(dim, dim)})
                                    for _ in range(depth))

    def forward(self, x):
        for layer in self.layers:
            x = highway_forward(x, layer["h"].weight, layer["h"].bias, layer["t"].weight, layer["t"].bias)
        return x


def dropout(x: torch.Tensor, p: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    """Inverted dropout driven by an explicit generator."""
    if p == 0.0 or generator is None:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


@dataclass
class EncodedSentence:
    token_inputs: torch.Tensor
    emissions: torch.Tensor
    lm_fw_logits: torch.Tensor
    lm_bw_logits: torch.Tensor


@dataclass
class EncodedBatch:
    token_inputs: torch.Tensor  # (B, N, D)
    emissions: torch.Tensor  # (B, N, K)
    lengths: torch.Tensor
    lm_fw_logits: torch.Tensor  # (M, V), row-major over (sentence, position)
    lm_fw_sent: torch.Tensor
    lm_bw_logits: torch.Tensor
    lm_bw_sent: torch.Tensor

    def sentence(self, b: int) -> EncodedSentence:
        n = int(self.lengths[b])
        return EncodedSentence(self.token_inputs[b, :n], self.emissions[b, :n],
                               self.lm_fw_logits[self.lm_fw_sent == b],
                               self.lm_bw_logits[self.lm_bw_sent == b])


class Tagger(nn.Module):
    def __init__(self, config: ModelConfig, n_tags: int, n_words: int, n_chars: int,
                 n_lm: int, n_phrases: int = 0):
        super().__init__()
        self.config = config
        h = config.hidden
        self.n_tags = n_tags
        self.char_emb = nn.Embedding(n_chars, config.char_dim)
        self.char_fw = nn.LSTM(config.char_dim, h, batch_first=True)
        self.char_bw = nn.LSTM(config.char_dim, h, batch_first=True)
        self.hw_tag = Highway(2 * h, config.highway_depth)
        self.hw_fw = Highway(h, config.highway_depth)
        self.hw_bw = Highway(h, config.highway_depth)
        self.word_emb = nn.Embedding(n_words, config.word_dim)
        if config.lexicon_mode == "softlexicon":
            self.phrase_emb = nn.Parameter(torch.zeros(n_phrases + 1, config.phrase_dim))
        in_dim = config.word_dim + 2 * h + config.lexicon_dim
        self.word_fw = nn.LSTM(in_dim, h, batch_first=True)
        self.word_bw = nn.LSTM(in_dim, h, batch_first=True)
        self.emit = nn.Linear(2 * h, n_tags)
        self.lm_fw = nn.Linear(h, n_lm)
        self.lm_bw = nn.Linear(h, n_lm)
        self.transitions = nn.Parameter(torch.zeros(n_tags + 2, n_tags + 2))
        self.double()

    def forward(self, batch: Sequence[SentenceFeatures], train_mode: bool = False,
                generator: Optional[torch.Generator] = None) -> EncodedBatch:
        cfg = self.config
        p = cfg.dropout if train_mode else 0.0
        gen = generator if train_mode else None
        bsz = len(batch)
        lengths = torch.tensor([len(f) for f in batch], dtype=torch.long)
        n = int(lengths.max())
        ar = torch.arange(bsz).unsqueeze(1)

        char_len = torch.tensor([len(f.char_ids) for f in batch], dtype=torch.long)
        chars = _pad([f.char_ids for f in batch], int(char_len.max()))
        char_fw, char_bw = _run_bilstm(self.char_fw, self.char_bw, self.char_emb(chars), char_len)
        fw = char_fw[ar, _pad([f.fw_pos for f in batch], n)]
        bw = char_bw[ar, _pad([f.bw_pos for f in batch], n)]

        parts = [self.word_emb(_pad([f.word_ids for f in batch], n)),
                 self.hw_tag(torch.cat([fw, bw], dim=-1))]
        if cfg.lexicon_mode == "softlexicon":
            parts.append(self._set_vectors(batch, n))
        elif cfg.lexicon_mode == "exsoftword":
            flags = torch.zeros(bsz, n, 5, dtype=torch.float64)
            for b, f in enumerate(batch):
                flags[b, :len(f)] = torch.from_numpy(f.flags)
            parts.append(flags)
        token_inputs = dropout(torch.cat(parts, dim=-1), p, gen)
        out = dropout(torch.cat(_run_bilstm(self.word_fw, self.word_bw, token_inputs, lengths), dim=-1), p, gen)
        emissions = self.emit(out)

        pos = torch.arange(n).unsqueeze(0)
        fw_mask = pos < (lengths - 1).unsqueeze(1)
        bw_mask = (pos >= 1) & (pos < lengths.unsqueeze(1))
        sent = ar.expand(bsz, n)
        return EncodedBatch(
            token_inputs=token_inputs,
            emissions=emissions,
            lengths=lengths,
            lm_fw_logits=self.lm_fw(self.hw_fw(fw[fw_mask])),
            lm_fw_sent=sent[fw_mask],
            lm_bw_logits=self.lm_bw(self.hw_bw(bw[bw_mask])),
            lm_bw_sent=sent[bw_mask],
        )

    def _set_vectors(self, batch, n):
        pd = self.config.phrase_dim
        rows, ids, weights = [], [], []
        for b, f in enumerate(batch):
            rows.append(f.lex_rows + 4 * n * b)
            ids.append(f.lex_ids)
            weights.append(f.lex_weights)
        rows = torch.from_numpy(np.concatenate(rows))
        contrib = self.phrase_emb[torch.from_numpy(np.concatenate(ids))]
        contrib = contrib * torch.from_numpy(np.concatenate(weights)).unsqueeze(1)
        flat = torch.zeros(len(batch) * n * 4, pd, dtype=torch.float64).index_add(0, rows, contrib)
        return flat.view(len(batch), n, 4 * pd)

    def losses(self, batch: Sequence[SentenceFeatures], train_mode: bool = False,
               generator: Optional[torch.Generator] = None):
        """Per-sentence ``(crf_nll, lm_loss)`` tensors of shape ``(B,)``."""
        enc = self(batch, train_mode, generator)
        n = enc.emissions.shape[1]
        tags = _pad([f.tags for f in batch], n)
        nll = crf.batch_nll(enc.emissions, self.transitions, tags, enc.lengths)
        lm_ids = [torch.from_numpy(f.lm_ids) for f in batch]
        fw_targets = torch.cat([ids[1:] for ids in lm_ids])
        bw_targets = torch.cat([ids[:-1] for ids in lm_ids])
        lm = (_per_sentence_ce(enc.lm_fw_logits, fw_targets, enc.lm_fw_sent, len(batch))
              + _per_sentence_ce(enc.lm_bw_logits, bw_targets, enc.lm_bw_sent, len(batch)))
        return nll, lm

    def decode(self, batch: Sequence[SentenceFeatures]) -> list[crf.DecodedPath]:
        with torch.no_grad():
            enc = self(batch, train_mode=False)
        return [crf.viterbi_decode(enc.emissions[b, :int(enc.lengths[b])], self.transitions)
                for b in range(len(batch))]


def _pad(arrays, n: int) -> torch.Tensor:
    out = np.zeros((len(arrays), n), dtype=np.int64)
    for i, a in enumerate(arrays):
        out[i, :len(a)] = a
    return torch.from_numpy(out)


def _reverse_index(lengths: torch.Tensor, n: int) -> torch.Tensor:
    """Per-row index reversing the first ``length`` positions; padding maps to itself."""
    pos = torch.arange(n).unsqueeze(0)
    last = (lengths - 1).unsqueeze(1)
    return torch.where(pos <= last, last - pos, pos)


def _run_bilstm(fw: nn.LSTM, bw: nn.LSTM, x: torch.Tensor, lengths: torch.Tensor):
    """Forward and backward states over right-padded input.

    Padding sits after each sequence, so the forward pass never sees it before
    a real step; the backward pass runs on per-row reversed input.
    """
    # packed sequences are exact too but their backward pass is several times slower on CPU
    rev = _reverse_index(lengths, x.shape[1])
    ar = torch.arange(x.shape[0]).unsqueeze(1)
    out_fw, _ = fw(x)
    out_bw, _ = bw(x[ar, rev])
    return out_fw, out_bw[ar, rev]


def _cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return -torch.log_softmax(logits, dim=-1).gather(1, targets.unsqueeze(1)).squeeze(1)


def _per_sentence_ce(logits, targets, sent, bsz):
    ce = _cross_entropy(logits, targets)
    total = torch.zeros(bsz, dtype=torch.float64).index_add(0, sent, ce)
    count = torch.zeros(bsz, dtype=torch.float64).index_add(0, sent, torch.ones_like(ce))
    return total / count.clamp(min=1.0)


def lm_loss(fw_logits: torch.Tensor, fw_targets, bw_logits: torch.Tensor, bw_targets) -> torch.Tensor:
    """Mean next-word cross-entropy plus mean previous-word cross-entropy."""
    total = torch.zeros((), dtype=torch.float64)
    for logits, targets in ((fw_logits, fw_targets), (bw_logits, bw_targets)):
        if len(logits):
            total = total + _cross_entropy(logits, torch.as_tensor(targets, dtype=torch.long)).mean()
    return total


def encode_sentence(features: SentenceFeatures, model: Tagger, train_mode: bool = False,
                    dropout_seed: int = 0) -> EncodedSentence:
    gen = torch.Generator().manual_seed(dropout_seed) if train_mode else None
    return model([features], train_mode, gen).sentence(0)


def _glorot(rng: np.random.Generator, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


def init_params(model: Tagger, seed: int) -> Tagger:
    """Deterministic initialisation from a numpy generator.

    Matrices: U(+-sqrt(6/(fan_in+fan_out))). Embeddings: U(+-sqrt(3/dim)).
    LSTM forget-gate bias 1 (input-side bias only), all other biases 0.
    """
    rng = np.random.default_rng(seed)
    h = model.config.hidden
    with torch.no_grad():
        for name, param in model.named_parameters():
            shape = tuple(param.shape)
            if name.endswith("emb.weight") or name == "phrase_emb":
                bound = np.sqrt(3.0 / shape[1])
                value = rng.uniform(-bound, bound, size=shape)
            elif "bias" in name:
                value = np.zeros(shape)
                if name.endswith("bias_ih_l0"):
                    value[h:2 * h] = 1.0
            else:
                value = _glorot(rng, shape)
            param.copy_(torch.from_numpy(value))
        model.char_emb.weight[0] = 0.0
        model.word_emb.weight[0] = 0.0
        crf.mask_transitions(model.transitions)
    return model
