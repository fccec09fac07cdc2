"""Rearrangement-invariant norms of sequences and matrices, with subgradients.

Supported families:

* ``schatten``    -- (sum_j s_j^p)^(1/p), p >= 1
* ``lorentz_p1``  -- sum_j j^(-1+1/p) s*_j, p >= 1 (weighted by rank)
* ``macaev``      -- sum_j s*_j / j (the p = infinity Lorentz weights)
* ``weights``     -- an explicit nonincreasing nonnegative weight sequence

where s* denotes the nonincreasing rearrangement of the absolute values.
Matrix norms apply the sequence norm to singular values; subgradients align a
weight subgradient of the sequence norm with the singular vectors, so that for
every N

    norm(N) >= norm(M) + Re trace(G^* (N - M)).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, NumericError

_KINDS = ("schatten", "lorentz_p1", "macaev", "weights")

#: Upper bound on the number of weighted-sum terms ever evaluated.
DEFAULT_LENGTH_HINT = 1 << 22


@dataclass(frozen=True)
class NormSpec:
    """Description of a rearrangement-invariant norm.

    ``p`` is required for ``schatten`` and ``lorentz_p1``; ``weights`` is
    required for kind ``weights`` and must be nonincreasing and nonnegative.
    ``length_hint`` caps how many weighted terms are summed (weighted kinds
    only; all sequences here are finite, so no truncation loss occurs).
    """

    kind: str
    p: float | None = None
    weights: tuple | None = None
    length_hint: int = DEFAULT_LENGTH_HINT

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown norm kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind in ("schatten", "lorentz_p1"):
            if self.p is None or not np.isfinite(self.p) or self.p < 1:
                raise ValidationError(f"{self.kind} norm requires p >= 1, got {self.p!r}")
        if self.kind == "weights":
            if self.weights is None or len(self.weights) == 0:
                raise ValidationError("kind=weights requires a nonempty weight sequence")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or np.any(np.diff(w) > 0):
                raise ValidationError("weights must be nonnegative and nonincreasing")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        if self.length_hint < 1:
            raise ValidationError("length_hint must be a positive integer")

    # -- convenience constructors -------------------------------------------------
    @staticmethod
    def schatten(p):
        return NormSpec("schatten", p=float(p))

    @staticmethod
    def lorentz(p):
        return NormSpec("lorentz_p1", p=float(p))

    @staticmethod
    def macaev():
        return NormSpec("macaev")

    @staticmethod
    def from_weights(w):
        return NormSpec("weights", weights=tuple(float(x) for x in w))

    # -- JSON ----------------------------------------------------------------------
    def to_json(self):
        obj = {"kind": self.kind}
        if self.p is not None:
            obj["p"] = float(self.p)
        if self.weights is not None:
            obj["weights"] = list(self.weights)
        return obj

    @staticmethod
    def from_json(obj):
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValidationError('norm JSON must be an object with a "kind" field')
        kind = obj["kind"]
        kwargs = {}
        if "p" in obj and obj["p"] is not None:
            kwargs["p"] = float(obj["p"])
        if "weights" in obj and obj["weights"] is not None:
            kwargs["weights"] = tuple(float(x) for x in obj["weights"])
        if "length_hint" in obj:
            kwargs["length_hint"] = int(obj["length_hint"])
        return NormSpec(kind, **kwargs)


def induced_weights(spec, n):
    """First ``n`` weights of a weighted-sum norm; ``None`` for schatten.

    Schatten norms are not weighted sums of the rearrangement, so callers must
    branch on ``spec.kind``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if spec.kind == "schatten":
        return None
    j = np.arange(1, n + 1, dtype=float)
    if spec.kind == "lorentz_p1":
        return j ** (-1.0 + 1.0 / spec.p)
    if spec.kind == "macaev":
        return 1.0 / j
    if n > len(spec.weights):
        raise ValidationError(
            f"requested {n} weights but the explicit sequence has {len(spec.weights)}"
        )
    return np.asarray(spec.weights[:n], dtype=float)


def _eval_weights(spec, n):
    """Weights used when evaluating a length-n sorted sequence (hint-capped)."""
    m = min(n, spec.length_hint)
    if spec.kind == "weights":
        m = min(m, len(spec.weights))
    w = np.zeros(n)
    if m > 0:
        w[:m] = induced_weights(spec, m)
    return w


def vector_norm(s, spec):
    """RI norm of a sequence; general inputs pass through absolute value."""
    s = np.abs(np.asarray(s)).astype(float)
    if s.size == 0:
        return 0.0
    # Summation happens in sorted order so rearrangement invariance is exact
    # in floating point, not just up to roundoff.
    srt = np.sort(s)[::-1]
    if spec.kind == "schatten":
        if spec.p == 1:
            return float(np.sum(srt))
        if spec.p == 2:
            return float(np.sqrt(np.sum(srt * srt)))
        return float(np.sum(srt ** spec.p) ** (1.0 / spec.p))
    w = _eval_weights(spec, srt.size)
    return float(w @ srt)


def _singular_values(M, hermitian=None):
    M = np.asarray(M)
    if hermitian is None:
        hermitian = (
            M.ndim == 2
            and M.shape[0] == M.shape[1]
            and np.allclose(M, M.conj().T, atol=1e-12 * max(1.0, float(np.abs(M).max(initial=0.0))))
        )
    try:
        if hermitian:
            return np.sort(np.abs(np.linalg.eigvalsh(M)))[::-1]
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure path
        raise NumericError(f"singular value computation failed: {exc}") from exc


def matrix_norm(M, spec, hermitian=None):
    """RI norm of a matrix, computed from its singular values."""
    return vector_norm(_singular_values(M, hermitian=hermitian), spec)


def _tie_averaged(values_sorted, w):
    """Average weights over groups of exactly equal sorted values."""
    out = np.array(w, dtype=float)
    i = 0
    n = len(values_sorted)
    while i < n:
        j = i + 1
        while j < n and values_sorted[j] == values_sorted[i]:
            j += 1
        if j - i > 1:
            out[i:j] = out[i:j].mean()
        i = j
    return out


def _gauge_subgradient(s_sorted, spec):
    """Subgradient of the sequence gauge at a nonincreasing nonnegative vector."""
    n = s_sorted.size
    if n == 0 or s_sorted[0] == 0.0:
        return np.zeros(n)
    if spec.kind == "schatten":
        if spec.p == 1:
            return np.ones(n)
        denom = vector_norm(s_sorted, spec)
        return (s_sorted / denom) ** (spec.p - 1.0)
    w = _eval_weights(spec, n)
    return _tie_averaged(s_sorted, w)


def norm_subgradient(M, spec):
    """Matrix G with norm(N) >= norm(M) + Re trace(G^*(N-M)) for all N.

    Weight ties across equal singular values are averaged, which makes the
    result independent of the SVD basis chosen inside tied blocks.
    """
    M = np.asarray(M)
    try:
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError(f"SVD failed: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(M)
    d = _gauge_subgradient(s, spec)
    return (U * d) @ Vh


def vector_norm_subgradient(v, spec):
    """Subgradient of ``vector_norm`` at a real or complex vector."""
    v = np.asarray(v)
    a = np.abs(v)
    if a.size == 0 or a.max() == 0.0:
        return np.zeros_like(v, dtype=float if not np.iscomplexobj(v) else complex)
    order = np.argsort(-a, kind="stable")
    d_sorted = _gauge_subgradient(a[order], spec)
    d = np.empty(a.size)
    d[order] = d_sorted
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(a > 0, v / np.where(a > 0, a, 1.0), 0.0)
    return d * phase


def spec_list(specs, n):
    """Normalize a single spec or per-component list to a list of length n."""
    if isinstance(specs, NormSpec):
        return [specs] * n
    specs = list(specs)
    if len(specs) != n:
        raise ValidationError(f"expected {n} norm specs, got {len(specs)}")
    for s in specs:
        if not isinstance(s, NormSpec):
            raise ValidationError("norm spec list must contain NormSpec instances")
    return specs
