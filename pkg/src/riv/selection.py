"""Relevant-instrument screening and the pairwise voting estimate of the valid set.

Indices are 0-based positions into the instrument columns throughout.
"""

from dataclasses import dataclass

import numpy as np

from riv.errors import NoRelevantInstrumentsError, SelectionError


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Output of instrument selection.

    ``Pi_matrix``, ``W_hat`` and ``V_tilde`` are ``None`` when the valid set was
    supplied by the user. ``Pi_matrix`` is indexed by position within ``S_hat``;
    the other sets hold instrument indices.
    """

    S_hat: tuple
    V_hat: tuple
    source: str
    Pi_matrix: np.ndarray = None
    W_hat: tuple = None
    V_tilde: tuple = None

    def to_dict(self, include_matrix=True):
        out = {
            "source": self.source,
            "S_hat": list(self.S_hat),
            "V_hat": list(self.V_hat),
        }
        if self.W_hat is not None:
            out["W_hat"] = list(self.W_hat)
            out["V_tilde"] = list(self.V_tilde)
            out["votes"] = self.Pi_matrix.sum(axis=1).astype(int).tolist()
            if include_matrix:
                out["Pi_matrix"] = self.Pi_matrix.astype(int).tolist()
        return out


def select_relevant(fit, raise_if_empty=True):
    """Instruments whose first-stage coefficient clears ``sqrt(log n)`` standard errors."""
    sd = np.sqrt(np.clip(np.diag(fit.V_gamma), 0.0, None))
    thr = np.sqrt(np.log(fit.n)) * sd
    g = np.abs(fit.gamma_hat)
    S = tuple(int(j) for j in np.flatnonzero((g >= thr) & (g > 0)))
    if not S and raise_if_empty:
        raise NoRelevantInstrumentsError(
            "no instrument passes the relevance threshold; "
            f"max |gamma_hat|/threshold = {np.max(g / np.where(thr > 0, thr, np.inf)):.3g}"
        )
    return S


def pair_pi(fit, j, k):
    """Invalidity estimate of instrument ``k`` when ``j`` is taken as valid, and its SE.

    The standard error treats ``Gamma_j / gamma_j`` as fixed and propagates the
    covariance blocks through the contrast ``e_k - (gamma_k / gamma_j) e_j``.
    Under homoscedastic blocks this reduces to
    ``sqrt((s_ee + b^2 s_dd - 2 b s_ed) / n) * sqrt(O_kk - 2 r O_jk + r^2 O_jj)``.
    """
    gj = fit.gamma_hat[j]
    if gj == 0:
        raise ZeroDivisionError(f"gamma_hat[{j}] is zero")
    b = fit.Gamma_hat[j] / gj
    if k == j:
        pi = 0.0
    else:
        pi = fit.Gamma_hat[k] - b * fit.gamma_hat[k]
    return float(pi), float(np.sqrt(_contrast_var(fit, j, k, b)))


def _contrast_var(fit, j, k, b):
    r = fit.gamma_hat[k] / fit.gamma_hat[j]

    def quad(M):
        return M[k, k] - r * (M[j, k] + M[k, j]) + r * r * M[j, j]

    var = quad(fit.V_Gamma) + b * b * quad(fit.V_gamma) - b * (quad(fit.C) + quad(fit.C.T))
    return max(var, 0.0)


def pairwise_tables(fit, S):
    """Matrices ``pi[a, b]`` and ``se[a, b]`` for instrument ``S[b]`` given ``S[a]`` valid."""
    S = list(S)
    m = len(S)
    pi = np.zeros((m, m))
    se = np.zeros((m, m))
    for a, j in enumerate(S):
        for c, k in enumerate(S):
            pi[a, c], se[a, c] = pair_pi(fit, j, k)
    return pi, se


def voting_matrix(fit, S, threshold=None):
    """Symmetric 0/1 matrix of mutual validity votes among the instruments in ``S``.

    Entry ``(a, b)`` is one when each of the two instruments passes the other's
    test ``|pi| <= se * threshold``; ``threshold`` defaults to ``sqrt(log n)``.
    """
    if threshold is None:
        threshold = np.sqrt(np.log(fit.n))
    pi, se = pairwise_tables(fit, S)
    ok = np.abs(pi) <= se * threshold
    Pi = (ok & ok.T).astype(np.int8)
    np.fill_diagonal(Pi, 1)
    return Pi


def _check_vote_matrix(Pi):
    Pi = np.asarray(Pi)
    if Pi.ndim != 2 or Pi.shape[0] != Pi.shape[1] or Pi.shape[0] == 0:
        raise SelectionError("voting matrix must be a non-empty square matrix")
    if not np.array_equal(Pi, Pi.T) or not np.all(np.diag(Pi) == 1):
        raise SelectionError("voting matrix must be symmetric with a unit diagonal")
    return Pi != 0


def tsht_valid_set(Pi):
    """Winner set, its neighbourhood, and the valid-set estimate from a vote matrix.

    Returns positions (rows of ``Pi``), not instrument indices.
    """
    A = _check_vote_matrix(Pi)
    votes = A.sum(axis=1)
    W = np.flatnonzero(votes == votes.max())
    V_tilde = np.flatnonzero(A[W].any(axis=0))
    V = np.flatnonzero(A[V_tilde].any(axis=0))
    return tuple(W.tolist()), tuple(V_tilde.tolist()), tuple(V.tolist())


def tsht_valid_set_paths(Pi):
    """Valid-set estimate read as: ``l`` is kept when some ``k`` links it to a winner.

    Direct transcription of the two-hop definition, kept separate from
    :func:`tsht_valid_set` so the two can be checked against each other.
    """
    A = _check_vote_matrix(Pi)
    m = A.shape[0]
    votes = [int(sum(A[j])) for j in range(m)]
    top = max(votes)
    winners = [j for j in range(m) if votes[j] == top]
    keep = []
    for l in range(m):
        if any(A[j, k] and A[k, l] for j in winners for k in range(m)):
            keep.append(l)
    return tuple(keep)


def tsht_selection(fit, S=None, threshold=None):
    """Run relevance screening, voting and valid-set construction."""
    if S is None:
        S = select_relevant(fit)
    S = tuple(S)
    Pi = voting_matrix(fit, S, threshold)
    W, Vt, V = tsht_valid_set(Pi)
    return SelectionResult(
        S_hat=S,
        V_hat=tuple(S[i] for i in V),
        source="tsht",
        Pi_matrix=Pi,
        W_hat=tuple(S[i] for i in W),
        V_tilde=tuple(S[i] for i in Vt),
    )


def external_valid_set(S, V_user):
    """Wrap a user-supplied valid set after checking ``V_user`` is a non-empty subset of ``S``."""
    S = tuple(int(s) for s in S)
    V = tuple(sorted({int(v) for v in V_user}))
    if not V:
        raise SelectionError("the supplied valid set is empty")
    outside = [v for v in V if v not in S]
    if outside:
        raise SelectionError(f"instruments {outside} are not in the relevant set {list(S)}")
    return SelectionResult(S_hat=S, V_hat=V, source="external")


def majority_selection(S):
    S = tuple(S)
    return SelectionResult(S_hat=S, V_hat=S, source="majority")
