"""Truncated signatures and log-signatures in the Lyndon-word basis.

A depth-D signature of a d-channel path lives in the truncated tensor
algebra: one dense order-k tensor per level k = 1..D plus a level-0
scalar.  Signatures of chords are tensor exponentials of the increment;
signatures of polylines are Chen (concatenation) products of chord
signatures; the tensor logarithm of a signature is a Lie element, and
its coordinates in the Lyndon bracket basis form the log-signature
vector of length given by the Witt formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, NonFiniteError
from .paths import SplinePath, sample_chords

__all__ = [
    "TruncatedTensor",
    "LyndonBasis",
    "LogSigSequence",
    "identity_tensor",
    "zero_tensor",
    "sig_linear",
    "sig_polyline",
    "chen_mul",
    "tensor_log",
    "tensor_exp",
    "lyndon_dimension",
    "lyndon_project",
    "lyndon_expand",
    "window_logsig",
]


@dataclass
class TruncatedTensor:
    """Element of the tensor algebra truncated at ``depth``.

    ``levels[k-1]`` is a dense array of shape ``(dim,) * k``; ``scalar``
    is the level-0 component (1 for signatures, 0 for Lie elements).
    """

    dim: int
    depth: int
    scalar: float
    levels: list[np.ndarray]

    def __post_init__(self) -> None:
        if self.dim < 1 or self.depth < 1:
            raise ContractError(f"need dim >= 1 and depth >= 1, got {self.dim}, {self.depth}")
        if len(self.levels) != self.depth:
            raise ContractError(f"expected {self.depth} levels, got {len(self.levels)}")
        for k, lvl in enumerate(self.levels, start=1):
            if lvl.shape != (self.dim,) * k:
                raise ContractError(f"level {k} has shape {lvl.shape}, expected {(self.dim,) * k}")
        if not np.isfinite(self.scalar) or not all(np.isfinite(l).all() for l in self.levels):
            raise NonFiniteError("non-finite truncated tensor")

    def copy(self) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, self.depth, self.scalar, [l.copy() for l in self.levels])

    def max_abs(self) -> float:
        return max([abs(self.scalar)] + [float(np.max(np.abs(l))) for l in self.levels])


def zero_tensor(dim: int, depth: int) -> TruncatedTensor:
    return TruncatedTensor(dim, depth, 0.0, [np.zeros((dim,) * k) for k in range(1, depth + 1)])


def identity_tensor(dim: int, depth: int) -> TruncatedTensor:
    out = zero_tensor(dim, depth)
    out.scalar = 1.0
    return out


def _axpy(acc: TruncatedTensor, c: float, x: TruncatedTensor) -> None:
    acc.scalar += c * x.scalar
    for a, b in zip(acc.levels, x.levels):
        a += c * b


def sig_linear(increment: np.ndarray, depth: int) -> TruncatedTensor:
    """Signature of a straight chord: exp of the increment, level k = v^(x)k / k!."""
    v = np.asarray(increment, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"increment must be a vector, got shape {v.shape}")
    out = identity_tensor(len(v), depth)
    out.levels[0] = v.copy()
    for k in range(2, depth + 1):
        out.levels[k - 1] = np.multiply.outer(out.levels[k - 2], v) / k
    return out


def chen_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated concatenation (tensor) product; Chen's identity multiplier."""
    if a.dim != b.dim or a.depth != b.depth:
        raise ContractError(
            f"operands disagree: dim {a.dim} vs {b.dim}, depth {a.depth} vs {b.depth}"
        )
    levels = []
    for n in range(1, a.depth + 1):
        acc = a.scalar * b.levels[n - 1] + b.scalar * a.levels[n - 1]
        for i in range(1, n):
            acc = acc + np.multiply.outer(a.levels[i - 1], b.levels[n - i - 1])
        levels.append(acc)
    return TruncatedTensor(a.dim, a.depth, a.scalar * b.scalar, levels)


def sig_polyline(points: np.ndarray, depth: int) -> TruncatedTensor:
    """Signature of the polyline through ``points`` (rows are vertices)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ContractError(f"polyline needs at least two points, got shape {pts.shape}")
    sig = sig_linear(pts[1] - pts[0], depth)
    for i in range(1, pts.shape[0] - 1):
        sig = chen_mul(sig, sig_linear(pts[i + 1] - pts[i], depth))
    return sig


def tensor_log(s: TruncatedTensor) -> TruncatedTensor:
    """Tensor logarithm of a group-like element (level-0 scalar must be 1)."""
    if abs(s.scalar - 1.0) > 1e-12:
        raise ContractError(f"tensor_log needs level-0 scalar 1, got {s.scalar}")
    u = s.copy()
    u.scalar = 0.0
    out = zero_tensor(s.dim, s.depth)
    power = u.copy()
    sign = 1.0
    for n in range(1, s.depth + 1):
        _axpy(out, sign / n, power)
        if n < s.depth:
            power = chen_mul(power, u)
            sign = -sign
    return out


def tensor_exp(l: TruncatedTensor) -> TruncatedTensor:
    """Tensor exponential of an element with zero level-0 scalar."""
    if abs(l.scalar) > 1e-12:
        raise ContractError(f"tensor_exp needs level-0 scalar 0, got {l.scalar}")
    out = identity_tensor(l.dim, l.depth)
    power = l.copy()
    for n in range(1, l.depth + 1):
        _axpy(out, 1.0 / math.factorial(n), power)
        if n < l.depth:
            power = chen_mul(power, l)
    return out


# ---------------------------------------------------------------------------
# Lyndon basis of the free Lie algebra
# ---------------------------------------------------------------------------


def _mobius(n: int) -> int:
    result = 1
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            result = -result
        p += 1
    if m > 1:
        result = -result
    return result


def lyndon_dimension(dim: int, depth: int) -> int:
    """Number of Lyndon words of length <= depth over a dim-letter alphabet.

    Necklace-counting (Witt) formula: sum over k of (1/k) sum_{e | k}
    mu(e) dim^(k/e).
    """
    total = 0
    for k in range(1, depth + 1):
        s = sum(_mobius(e) * dim ** (k // e) for e in range(1, k + 1) if k % e == 0)
        total += s // k
    return total


def _duval_words(dim: int, max_len: int) -> list[tuple[int, ...]]:
    """All Lyndon words of length <= max_len, by Duval's algorithm."""
    words: list[tuple[int, ...]] = []
    w = [-1]
    while w:
        w[-1] += 1
        words.append(tuple(w))
        m = len(w)
        while len(w) < max_len:
            w.append(w[len(w) - m])
        while w and w[-1] == dim - 1:
            w.pop()
    return words


def _is_lyndon(word: tuple[int, ...]) -> bool:
    return all(word < word[k:] + word[:k] for k in range(1, len(word)))


def _standard_factorization(word: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split a Lyndon word as u*v with v its longest proper Lyndon suffix."""
    for start in range(1, len(word)):
        if _is_lyndon(word[start:]):
            return word[:start], word[start:]
    raise ContractError(f"no standard factorization for {word}")  # pragma: no cover


class LyndonBasis:
    """Lyndon bracket basis of the free Lie algebra, truncated at ``depth``.

    Words are ordered by length then lexicographically.  ``expansions[i]``
    is the dense concatenation-algebra expansion of the bracketed word
    ``words[i]``; expansions are triangular: the word itself carries
    coefficient 1 and every other word in the expansion is
    lexicographically greater, which makes projection a simple sweep.
    """

    def __init__(self, dim: int, depth: int):
        if dim < 1 or depth < 1:
            raise ContractError(f"need dim >= 1 and depth >= 1, got {dim}, {depth}")
        self.dim = dim
        self.depth = depth
        self.words: list[tuple[int, ...]] = sorted(
            _duval_words(dim, depth), key=lambda w: (len(w), w)
        )
        expected = lyndon_dimension(dim, depth)
        if len(self.words) != expected:
            raise ContractError(
                f"basis of size {len(self.words)} does not match dimension formula {expected}"
            )
        cache: dict[tuple[int, ...], np.ndarray] = {}
        self.expansions: list[np.ndarray] = [self._expand(w, cache) for w in self.words]

    def __len__(self) -> int:
        return len(self.words)

    def _expand(self, word: tuple[int, ...], cache: dict) -> np.ndarray:
        if word in cache:
            return cache[word]
        if len(word) == 1:
            arr = np.zeros(self.dim)
            arr[word[0]] = 1.0
        else:
            u, v = _standard_factorization(word)
            eu, ev = self._expand(u, cache), self._expand(v, cache)
            arr = np.multiply.outer(eu, ev) - np.multiply.outer(ev, eu)
        cache[word] = arr
        return arr


def lyndon_project(lie: TruncatedTensor, basis: LyndonBasis, tol: float = 1e-8) -> np.ndarray:
    """Coordinates of a Lie element in the Lyndon basis.

    Exploits triangularity: sweeping words in (length, lex) order, the
    residual coefficient at each word is that word's coordinate.  A
    residual above ``tol`` after the sweep means the input was not a Lie
    element.
    """
    if lie.dim != basis.dim or lie.depth != basis.depth:
        raise ContractError(
            f"element ({lie.dim}, {lie.depth}) does not match basis ({basis.dim}, {basis.depth})"
        )
    if abs(lie.scalar) > tol:
        raise ContractError(f"Lie element must have zero level-0 scalar, got {lie.scalar}")
    residual = [l.copy() for l in lie.levels]
    coords = np.zeros(len(basis))
    for i, word in enumerate(basis.words):
        lvl = residual[len(word) - 1]
        c = lvl[word]
        coords[i] = c
        if c != 0.0:
            lvl -= c * basis.expansions[i]
    worst = max(float(np.max(np.abs(l))) for l in residual)
    if worst > tol:
        raise ContractError(f"input is not a Lie element: projection residual {worst:.3e}")
    return coords


def lyndon_expand(coords: np.ndarray, basis: LyndonBasis) -> TruncatedTensor:
    """Rebuild the Lie element from Lyndon coordinates (inverse of project)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (len(basis),):
        raise ContractError(f"expected {len(basis)} coordinates, got shape {coords.shape}")
    out = zero_tensor(basis.dim, basis.depth)
    for c, word, expansion in zip(coords, basis.words, basis.expansions):
        out.levels[len(word) - 1] += c * expansion
    return out


# ---------------------------------------------------------------------------
# Windowed log-signatures of a spline path
# ---------------------------------------------------------------------------


@dataclass
class LogSigSequence:
    """Per-window, per-node log-signature coordinates of a path.

    ``coords`` has shape (windows, ..., nodes, L) — optional batch axes
    may sit between windows and nodes.  ``boundaries`` are the window
    edges in knot-index units; their differences are the divisors used
    when a window's log-signature is turned into an average velocity.
    """

    coords: np.ndarray
    boundaries: np.ndarray
    depth: int
    dim: int

    num_windows: int = field(init=False)

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.boundaries = np.asarray(self.boundaries, dtype=np.float64)
        if self.coords.ndim < 3:
            raise ContractError(f"coords must be (windows, ..., nodes, L), got {self.coords.shape}")
        if self.boundaries.shape != (self.coords.shape[0] + 1,):
            raise ContractError(
                f"boundaries shape {self.boundaries.shape} does not match {self.coords.shape[0]} windows"
            )
        if not np.all(np.diff(self.boundaries) > 0):
            raise ContractError("window boundaries must be strictly increasing")
        self.num_windows = self.coords.shape[0]

    @property
    def divisors(self) -> np.ndarray:
        return np.diff(self.boundaries)


def window_logsig(
    path: SplinePath,
    subpath_len: int,
    depth: int,
    substeps: int = 1,
    basis: LyndonBasis | None = None,
) -> LogSigSequence:
    """Depth-``depth`` log-signature of each node over each sub-path window.

    The knot grid 0..N is cut into ceil(N / subpath_len) windows
    [i*P, min((i+1)*P, N)]; the final window may be shorter and its true
    length is recorded in the boundaries.  Each window is approximated
    by ``substeps`` chords per knot interval (samples evenly spaced in
    time), and the chord polyline's signature logarithm is projected
    onto the Lyndon basis.
    """
    if subpath_len < 1:
        raise ContractError(f"sub-path length must be >= 1, got {subpath_len}")
    if substeps < 1:
        raise ContractError(f"substeps must be >= 1, got {substeps}")
    grid = path.grid
    n_intervals = len(grid) - 1
    if n_intervals < subpath_len:
        raise DataError(
            f"series with {n_intervals + 1} samples is too short for sub-path length {subpath_len}"
        )
    if basis is None:
        basis = LyndonBasis(path.num_channels, depth)
    elif basis.dim != path.num_channels or basis.depth != depth:
        raise ContractError("supplied basis does not match path channels / depth")
    n_windows = -(-n_intervals // subpath_len)
    edges = [min(i * subpath_len, n_intervals) for i in range(n_windows + 1)]
    coords = np.zeros((n_windows, path.num_nodes, len(basis)))
    for w in range(n_windows):
        i0, i1 = edges[w], edges[w + 1]
        lo, hi = float(grid[i0]), float(grid[i1])
        nseg = (i1 - i0) * substeps
        for v in range(path.num_nodes):
            pts = sample_chords(path, v, (lo, hi), nseg)
            lie = tensor_log(sig_polyline(pts, depth))
            coords[w, v] = lyndon_project(lie, basis)
    return LogSigSequence(
        coords=coords,
        boundaries=np.asarray(edges, dtype=np.float64),
        depth=depth,
        dim=path.num_channels,
    )
