"""Linear-chain CRF with virtual START/STOP states.

The transition matrix has shape ``(K + 2, K + 2)``; ``T[i, j]`` scores moving
from tag ``i`` to tag ``j``. Index ``K`` is START and ``K + 1`` is STOP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

IMPOSSIBLE = -1e4


def start_index(T) -> int:
    return T.shape[0] - 2


def stop_index(T) -> int:
    return T.shape[0] - 1


def mask_transitions(T: torch.Tensor) -> torch.Tensor:
    """Fill entries that no path can use: into START, out of STOP."""
    with torch.no_grad():
        T[:, start_index(T)] = IMPOSSIBLE
        T[stop_index(T), :] = IMPOSSIBLE
    return T


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x), dtype=torch.float64)


def _logsumexp(x: torch.Tensor, dim: int) -> torch.Tensor:
    m = x.max(dim=dim, keepdim=True).values.detach()
    return (m + torch.log(torch.exp(x - m).sum(dim=dim, keepdim=True))).squeeze(dim)


def _check_tags(tags, k: int, n: int) -> torch.Tensor:
    tags = torch.as_tensor(tags, dtype=torch.long)
    if tags.shape != (n,):
        raise ValueError(f"expected {n} tags, got shape {tuple(tags.shape)}")
    if n and (tags.min() < 0 or tags.max() >= k):
        raise IndexError(f"tag index out of range [0, {k})")
    return tags


def sequence_score(emissions, T, tags) -> torch.Tensor:
    emissions, T = _as_tensor(emissions), _as_tensor(T)
    n, k = emissions.shape
    tags = _check_tags(tags, k, n)
    score = T[start_index(T), tags[0]] + T[tags[-1], stop_index(T)]
    score = score + emissions[torch.arange(n), tags].sum()
    if n > 1:
        score = score + T[tags[:-1], tags[1:]].sum()
    return score


def log_partition(emissions, T) -> torch.Tensor:
    emissions, T = _as_tensor(emissions), _as_tensor(T)
    k = emissions.shape[1]
    trans = T[:k, :k]
    alpha = T[start_index(T), :k] + emissions[0]
    for i in range(1, emissions.shape[0]):
        alpha = _logsumexp(alpha.unsqueeze(1) + trans, dim=0) + emissions[i]
    return _logsumexp(alpha + T[:k, stop_index(T)], dim=0)


def crf_nll(emissions, T, gold) -> torch.Tensor:
    return log_partition(emissions, T) - sequence_score(emissions, T, gold)


@dataclass(frozen=True)
class DecodedPath:
    tags: tuple[int, ...]
    score: float


def viterbi_decode(emissions, T) -> DecodedPath:
    """Best path; ties go to the lowest tag index."""
    em = emissions.detach().cpu().numpy() if isinstance(emissions, torch.Tensor) else np.asarray(emissions, float)
    tr = T.detach().cpu().numpy() if isinstance(T, torch.Tensor) else np.asarray(T, float)
    n, k = em.shape
    start, stop = tr.shape[0] - 2, tr.shape[0] - 1
    trans = tr[:k, :k]
    delta = tr[start, :k] + em[0]
    back = np.zeros((n, k), dtype=np.int64)
    for i in range(1, n):
        cand = delta[:, None] + trans
        back[i] = np.argmax(cand, axis=0)
        delta = cand[back[i], np.arange(k)] + em[i]
    final = delta + tr[:k, stop]
    best = int(np.argmax(final))
    path = [best]
    for i in range(n - 1, 0, -1):
        best = int(back[i, best])
        path.append(best)
    return DecodedPath(tuple(reversed(path)), float(np.max(final)))


def batch_nll(emissions: torch.Tensor, T: torch.Tensor, tags: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Per-sentence NLL for a padded ``(B, N, K)`` batch."""
    bsz, n, k = emissions.shape
    start, stop = start_index(T), stop_index(T)
    trans = T[:k, :k]
    mask = torch.arange(n).unsqueeze(0) < lengths.unsqueeze(1)
    ar = torch.arange(bsz)

    alpha = T[start, :k] + emissions[:, 0]
    gold = T[start, tags[:, 0]] + emissions[ar, 0, tags[:, 0]]
    for i in range(1, n):
        step = _logsumexp(alpha.unsqueeze(2) + trans, dim=1) + emissions[:, i]
        live = mask[:, i].unsqueeze(1)
        alpha = torch.where(live, step, alpha)
        gain = trans[tags[:, i - 1], tags[:, i]] + emissions[ar, i, tags[:, i]]
        gold = gold + torch.where(mask[:, i], gain, torch.zeros_like(gain))
    last = tags[ar, lengths - 1]
    gold = gold + T[last, stop]
    return _logsumexp(alpha + T[:k, stop], dim=1) - gold
