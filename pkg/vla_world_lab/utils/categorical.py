"""Row-wise categorical distributions over logits."""
from typing import Tuple

import numpy as np
from scipy.special import log_softmax, softmax


def log_probs(logits: np.ndarray) -> np.ndarray:
    return log_softmax(np.asarray(logits, dtype=float), axis=-1)


def probs(logits: np.ndarray) -> np.ndarray:
    return softmax(np.asarray(logits, dtype=float), axis=-1)


def one_hot(indices, size: int) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.zeros((len(idx), size))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def sample_rows(logits: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
    """One draw per row by inverse CDF (arg-max when greedy)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    if greedy:
        return np.argmax(logits, axis=1)
    cdf = np.cumsum(probs(logits), axis=1)
    u = rng.random(len(logits))[:, None] * cdf[:, -1:]
    return np.minimum((cdf < u).sum(axis=1), logits.shape[1] - 1)


def picked_log_probs(logits: np.ndarray, picks: np.ndarray) -> np.ndarray:
    logp = np.atleast_2d(log_probs(logits))
    return logp[np.arange(len(logp)), np.asarray(picks, dtype=np.int64)]


def logit_score(logits: np.ndarray, picks: np.ndarray) -> np.ndarray:
    """d log p(pick) / d logits = onehot(pick) - softmax, one row per pick."""
    p = np.atleast_2d(probs(logits))
    return one_hot(picks, p.shape[1]) - p


def kl_rows(p_logits: np.ndarray, q_logits: np.ndarray) -> np.ndarray:
    """KL(p || q) per row; p-zero terms contribute nothing."""
    lp, lq = np.atleast_2d(log_probs(p_logits)), np.atleast_2d(log_probs(q_logits))
    p = np.exp(lp)
    return np.maximum((p * (lp - lq)).sum(axis=1), 0.0)


def kl_rows_with_grad(p_logits: np.ndarray, q_logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """KL(p || q) per row and its gradient w.r.t. the p logits."""
    lp, lq = np.atleast_2d(log_probs(p_logits)), np.atleast_2d(log_probs(q_logits))
    p = np.exp(lp)
    kl = (p * (lp - lq)).sum(axis=1)
    grad = p * (lp - lq - kl[:, None])
    return np.maximum(kl, 0.0), grad


def kl_probs(p: np.ndarray, q: np.ndarray) -> float:
    """Closed-form KL between two explicit probability vectors."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    support = p > 0
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
