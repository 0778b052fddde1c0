"""Finite-state discrete-time Markov additive processes.

A :class:`MapModel` has a modulating chain ``J`` with transition matrix ``P``
and, for every transition ``i -> j``, a finite increment law ``H_ij``.  The
kernel ``F_ij(dx) = p_ij H_ij(dx)`` has matrix transform ``F_hat[theta]``
whose Perron root is ``exp(kappa(theta))`` with right eigenvector ``h``.

Tilting by ``theta`` gives the companion model

    p~_ij = exp(-kappa) F_hat_ij[theta] h_j / h_i,
    H~_ij(dx) = exp(theta x) H_ij(dx) / H_hat_ij[theta],

and the likelihood ratio of the tilted law against the original on paths of
length ``n`` is ``L_n = h(J_n) / h(J_0) * exp(theta S_n - n kappa)``, a
mean-one martingale.

Increments live on a lattice so that every bound can be checked against
exact enumeration or an exact first-passage recursion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .errors import CapabilityError, ConfigError, DomainError, ModelError, NoRootError, NumericError

_TOL = 1e-12
MAX_PATHS = 10**7


@dataclass(frozen=True, eq=False)
class MapModel:
    """Transition matrix ``P`` plus per-transition increment laws.

    ``increments[i][j]`` is a pair ``(values, probs)``; transitions with
    ``p_ij = 0`` may carry an empty pair.
    """

    states: tuple
    P: np.ndarray = field(repr=False)
    increments: tuple = field(repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        k = len(self.states)
        if k == 0 or P.shape != (k, k):
            raise ModelError("P must be a square matrix matching the state list")
        if len(set(self.states)) != k:
            raise ModelError("state labels must be distinct")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > _TOL):
            raise ModelError("rows of P must be nonnegative and sum to 1")
        incs = []
        for i in range(k):
            row = []
            for j in range(k):
                vals, probs = self.increments[i][j]
                vals = np.array(vals, dtype=float)
                probs = np.array(probs, dtype=float)
                if vals.shape != probs.shape or vals.ndim != 1:
                    raise ModelError(f"increment law {i}->{j}: values and probabilities must align")
                if P[i, j] > 0:
                    if vals.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > _TOL:
                        raise ModelError(f"increment law {i}->{j} must be a probability vector")
                    if not np.all(np.isfinite(vals)):
                        raise ModelError(f"increment law {i}->{j} has non-finite support")
                order = np.argsort(vals)
                vals, probs = vals[order], probs[order]
                vals.setflags(write=False)
                probs.setflags(write=False)
                row.append((vals, probs))
            incs.append(tuple(row))
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "increments", tuple(incs))
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def _edges(self):
        k = self.n_states
        return [(i, j) for i in range(k) for j in range(k) if self.P[i, j] > 0]

    @cached_property
    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.P.T)
        idx = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(v[:, idx])
        pi = pi / pi.sum()
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()

    @cached_property
    def drift(self) -> float:
        """Stationary mean increment per step."""
        mean_ij = np.zeros_like(self.P)
        for i, j in self._edges():
            vals, probs = self.increments[i][j]
            mean_ij[i, j] = float(np.dot(vals, probs))
        return float(self.stationary @ (self.P * mean_ij).sum(axis=1))

    @property
    def has_positive_increment(self) -> bool:
        return any(np.any(self.increments[i][j][0] > 0) for i, j in self._edges())

    @property
    def has_negative_increment(self) -> bool:
        return any(np.any(self.increments[i][j][0] < 0) for i, j in self._edges())

    @cached_property
    def irreducible(self) -> bool:
        n, _ = csgraph.connected_components(sparse.csr_matrix(self.P > 0), directed=True, connection="strong")
        return n == 1

    @cached_property
    def lattice_step(self) -> float:
        """Largest ``delta`` with every increment an integer multiple of ``delta``."""
        fracs = [
            Fraction(float(v)).limit_denominator(10**6)
            for i, j in self._edges()
            for v in self.increments[i][j][0]
            if v != 0
        ]
        if not fracs:
            return 1.0
        for f, v in zip(fracs, (v for i, j in self._edges() for v in self.increments[i][j][0] if v != 0)):
            if abs(float(f) - v) > 1e-9 * max(1.0, abs(v)):
                raise CapabilityError("increments are not on a rational lattice")
        den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs))
        num = reduce(math.gcd, (abs(f.numerator * (den // f.denominator)) for f in fracs))
        return num / den

    def integer_increments(self):
        """``increments`` expressed as integer multiples of ``lattice_step``."""
        step = self.lattice_step
        k = self.n_states
        return [[(np.rint(self.increments[i][j][0] / step).astype(np.int64), self.increments[i][j][1]) for j in range(k)] for i in range(k)]

    # -- constructors ----------------------------------------------------
    @classmethod
    def single_state(cls, values, probs, label="s") -> "MapModel":
        return cls((label,), [[1.0]], (((values, probs),),))

    @classmethod
    def destination_driven(cls, states, P, laws) -> "MapModel":
        """Increments depend only on the state being entered: ``H_ij = laws[j]``."""
        k = len(states)
        return cls(states, P, tuple(tuple(laws[j] for j in range(k)) for _ in range(k)))

    @classmethod
    def from_capacity_levels(cls, states, P, levels, probs, rate: float, step: float) -> "MapModel":
        """Net process ``C - rate`` for a Markov-modulated capacity.

        In state ``j`` the slot capacity takes ``levels[j]`` with ``probs[j]``;
        values are rounded to multiples of ``step`` after subtracting ``rate``.
        """
        laws = []
        for lv, pr in zip(levels, probs):
            net = np.rint((np.asarray(lv, dtype=float) - rate) / step) * step
            uniq, inv = np.unique(net, return_inverse=True)
            agg = np.bincount(inv, weights=np.asarray(pr, dtype=float))
            laws.append((uniq, agg))
        return cls.destination_driven(states, P, laws)

    @classmethod
    def from_text(cls, text: str) -> "MapModel":
        """Parse the line-oriented model format.

        ::

            states good bad
            row good 0.7 0.3
            row bad 0.4 0.6
            inc good good -1:0.4 1:0.4 2:0.2
            inc * bad -2:0.6 -1:0.3 1:0.1

        ``inc * j`` assigns the law to every transition into ``j``.  Blank
        lines and ``#`` comments are ignored.
        """
        states = None
        rows = {}
        incs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0]
            if key == "states":
                if states is not None:
                    raise ConfigError("states declared twice", lineno)
                states = parts[1:]
                if not states or len(set(states)) != len(states):
                    raise ConfigError("states must be a nonempty list of distinct labels", lineno)
                continue
            if states is None:
                raise ConfigError("'states' must come first", lineno)
            if key == "row":
                if len(parts) != len(states) + 2 or parts[1] not in states:
                    raise ConfigError(f"row needs a state label and {len(states)} probabilities", lineno)
                try:
                    vals = [float(x) for x in parts[2:]]
                except ValueError:
                    raise ConfigError("row entries must be numbers", lineno) from None
                if any(v < 0 for v in vals) or abs(sum(vals) - 1.0) > _TOL:
                    raise ConfigError("row must be nonnegative and sum to 1", lineno)
                rows[parts[1]] = vals
            elif key == "inc":
                if len(parts) < 4:
                    raise ConfigError("inc needs a source, a target and value:prob pairs", lineno)
                src, dst = parts[1], parts[2]
                if (src != "*" and src not in states) or dst not in states:
                    raise ConfigError(f"unknown state in transition {src}->{dst}", lineno)
                try:
                    pairs = [tuple(float(x) for x in tok.split(":")) for tok in parts[3:]]
                except ValueError:
                    raise ConfigError("increments must be value:probability pairs", lineno) from None
                if any(len(p) != 2 for p in pairs):
                    raise ConfigError("increments must be value:probability pairs", lineno)
                probs = [p for _, p in pairs]
                if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > _TOL:
                    raise ConfigError("increment probabilities must be nonnegative and sum to 1", lineno)
                for s in states if src == "*" else [src]:
                    incs[(s, dst)] = ([v for v, _ in pairs], probs)
            else:
                raise ConfigError(f"unknown directive {key!r}", lineno)
        if states is None:
            raise ConfigError("no states declared")
        missing = [s for s in states if s not in rows]
        if missing:
            raise ConfigError(f"missing row for state(s) {', '.join(missing)}")
        P = [rows[s] for s in states]
        table = []
        for a, s in enumerate(states):
            row = []
            for b, t in enumerate(states):
                if (s, t) in incs:
                    row.append(incs[(s, t)])
                elif P[a][b] > 0:
                    raise ConfigError(f"transition {s}->{t} has positive probability but no 'inc' line")
                else:
                    row.append(([], []))
            table.append(tuple(row))
        try:
            return cls(tuple(states), P, tuple(table))
        except ModelError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "MapModel":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = ["states " + " ".join(map(str, self.states))]
        for s, row in zip(self.states, self.P):
            lines.append(f"row {s} " + " ".join(f"{p:.17g}" for p in row))
        for i, j in self._edges():
            vals, probs = self.increments[i][j]
            pairs = " ".join(f"{v:.17g}:{p:.17g}" for v, p in zip(vals, probs))
            lines.append(f"inc {self.states[i]} {self.states[j]} {pairs}")
        return "\n".join(lines) + "\n"


def reference_model() -> MapModel:
    """Two-state lattice model with negative drift used throughout the tests.

    A good state whose slots mostly exceed the reference rate and a bad state
    whose slots mostly fall short; increments depend on the state entered.
    """
    return MapModel.destination_driven(
        ("good", "bad"),
        [[0.7, 0.3], [0.4, 0.6]],
        [([-1.0, 1.0, 2.0], [0.4, 0.4, 0.2]), ([-2.0, -1.0, 1.0], [0.6, 0.3, 0.1])],
    )


# -- transforms and tilting ------------------------------------------------------
def _h_hat(model: MapModel, theta: float) -> np.ndarray:
    k = model.n_states
    out = np.zeros((k, k))
    with np.errstate(over="raise"):
        try:
            for i, j in model._edges():
                vals, probs = model.increments[i][j]
                out[i, j] = float(np.dot(probs, np.exp(theta * vals)))
        except FloatingPointError:
            raise NumericError(f"increment transform overflows at theta={theta}") from None
    if not np.all(np.isfinite(out)):
        raise NumericError(f"increment transform overflows at theta={theta}")
    return out


def f_hat(model: MapModel, theta: float) -> np.ndarray:
    """``F_hat[theta]_ij = p_ij sum_x H_ij(x) exp(theta x)``."""
    if not math.isfinite(theta):
        raise DomainError("theta must be finite")
    return model.P * _h_hat(model, theta)


def kappa_and_h(model: MapModel, theta: float, tol: float = 1e-12, max_iter: int = 200000) -> tuple[float, np.ndarray]:
    """Perron root ``exp(kappa)`` and right eigenvector ``h`` (max entry 1).

    Power iteration runs on ``A + I`` (``A`` rescaled to unit max entry) so
    periodic chains converge too.
    """
    if not model.irreducible:
        raise ModelError("the modulating chain is reducible")
    if theta == 0:
        # F_hat[0] = P is stochastic: its Perron pair is (1, ones) exactly.
        return 0.0, np.ones(model.n_states)
    A = f_hat(model, theta)
    scale = A.max()
    if not scale > 0:
        raise ModelError("F_hat has no positive entry")
    B = A / scale + np.eye(model.n_states)
    h = np.ones(model.n_states)
    lam = 1.0
    for _ in range(max_iter):
        nxt = B @ h
        lam = nxt.max()
        nxt /= lam
        if np.max(np.abs(nxt - h)) <= tol * 1e-2:
            h = nxt
            break
        h = nxt
    rho = (lam - 1.0) * scale
    resid = np.max(np.abs(A @ h - rho * h))
    if not (rho > 0 and np.all(h > 0)) or resid > tol * max(1.0, rho):
        w, v = np.linalg.eig(A)
        idx = int(np.argmax(np.real(w)))
        vec = np.real(v[:, idx])
        vec = vec / vec[np.argmax(np.abs(vec))]
        rho = float(np.real(w[idx]))
        if not (rho > 0 and np.all(vec > 0)):
            raise ModelError("power iteration stalled; the chain may be reducible")
        h = vec
    return math.log(rho), h / h.max()


def kappa(model: MapModel, theta: float) -> float:
    return kappa_and_h(model, theta)[0]


@dataclass(frozen=True)
class TiltedMap:
    theta: float
    kappa: float
    h: np.ndarray = field(repr=False)
    model: MapModel = field(repr=False)
    source: MapModel = field(repr=False)

    @property
    def P_tilt(self) -> np.ndarray:
        return self.model.P

    @property
    def H_tilt(self):
        return self.model.increments

    def eigen_residual(self) -> float:
        A = f_hat(self.source, self.theta)
        return float(np.max(np.abs(A @ self.h - math.exp(self.kappa) * self.h)))


def tilt(model: MapModel, theta: float) -> TiltedMap:
    """Exponentially tilted companion model."""
    kap, h = kappa_and_h(model, theta)
    A = f_hat(model, theta)
    hh = _h_hat(model, theta)
    Pt = math.exp(-kap) * A * h[None, :] / h[:, None]
    Pt = Pt / Pt.sum(axis=1, keepdims=True)
    k = model.n_states
    incs = []
    for i in range(k):
        row = []
        for j in range(k):
            vals, probs = model.increments[i][j]
            if model.P[i, j] > 0:
                w = probs * np.exp(theta * vals) / hh[i, j]
                row.append((vals, w / w.sum()))
            else:
                row.append((vals, probs))
        incs.append(tuple(row))
    return TiltedMap(float(theta), kap, h, MapModel(model.states, Pt, tuple(incs)), model)


def kappa_safe(model: MapModel, theta: float) -> float:
    try:
        return kappa(model, theta)
    except NumericError:
        raise NoRootError("kappa overflowed before crossing zero") from None


def lundberg_root(model: MapModel, theta_max: float = 200.0, tol: float = 1e-12) -> float:
    """Positive root of ``kappa(theta) = 0`` by bisection."""
    if model.drift >= 0:
        raise NoRootError(f"drift {model.drift:.6g} is not negative; no positive Lundberg root")
    if not model.has_positive_increment:
        raise NoRootError("no positive increments; kappa stays negative")
    hi = 0.01
    while kappa_safe(model, hi) <= 0:
        hi *= 2.0
        if hi > theta_max:
            raise NoRootError(f"kappa does not cross zero below theta={theta_max}")
    # Convexity with kappa(0) = 0 and negative slope: kappa < 0 on (0, root).
    lo = hi / 2.0 if hi > 0.01 else 1e-9
    return float(optimize.bisect(lambda t: kappa(model, t), lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


# -- supremum bounds ------------------------------------------------------------------
@dataclass(frozen=True)
class SupTailBounds:
    theta: float
    u: float
    h: np.ndarray = field(repr=False)
    lundberg: np.ndarray = field(repr=False)
    refined_lower: np.ndarray = field(repr=False)
    refined_upper: np.ndarray = field(repr=False)
    c_minus: float = 0.0
    c_plus: float = 0.0
    lundberg_mixed: float = 0.0
    refined_lower_mixed: float = 0.0
    refined_upper_mixed: float = 0.0


def overshoot_constants(model: MapModel, theta: float, h: np.ndarray) -> tuple[float, float]:
    """``(C_-, C_+)`` bracketing ``E[exp(-theta xi) / h(I)]`` at first passage.

    For the pre-passage state ``k`` and distance ``x >= 0`` to the level, the
    tilted overshoot expectation equals

        Bbar_k(x) / sum_j p_kj h_j int_{(x, inf)} exp(theta (y - x)) H_kj(dy)

    with ``B_k = sum_j p_kj H_kj``.  On a lattice this ratio increases between
    support points, so its infimum is attained at ``x = 0`` or a support point
    and its supremum is a left limit at a support point.
    """
    k = model.n_states
    lows, highs = [], []
    for a in range(k):
        pts = sorted({0.0} | {float(v) for j in range(k) if model.P[a, j] > 0 for v in model.increments[a][j][0] if v >= 0})

        def ratio(x, strict):
            num = 0.0
            den = 0.0
            for j in range(k):
                if model.P[a, j] == 0:
                    continue
                vals, probs = model.increments[a][j]
                mask = vals > x if strict else vals >= x
                num += model.P[a, j] * float(probs[mask].sum())
                den += model.P[a, j] * h[j] * float(np.dot(probs[mask], np.exp(theta * (vals[mask] - x))))
            return (num / den) if num > 0 else None

        inf_vals = [r for r in (ratio(x, True) for x in pts) if r is not None]
        sup_vals = [r for r in (ratio(x, False) for x in pts if x > 0) if r is not None]
        if inf_vals:
            lows.append(min(inf_vals))
        if sup_vals:
            highs.append(max(sup_vals))
    return min(lows), max(highs)


def sup_tail_bounds(model: MapModel, u: float, theta: float | None = None) -> SupTailBounds:
    """Per-state Lundberg bound and the two-sided overshoot refinement on ``P_i(M > u)``."""
    if u < 0:
        raise DomainError("level u must be >= 0")
    theta = lundberg_root(model) if theta is None else theta
    _, h = kappa_and_h(model, theta)
    decay = math.exp(-theta * u)
    lund = np.minimum(h / h.min() * decay, 1.0)
    cm, cp = overshoot_constants(model, theta, h)
    lo = np.minimum(cm * h * decay, 1.0)
    up = np.minimum(cp * h * decay, 1.0)
    pi = model.stationary
    return SupTailBounds(
        theta, float(u), h, lund, lo, up, cm, cp, float(pi @ lund), float(pi @ lo), float(pi @ up)
    )


# -- exact oracles -------------------------------------------------------------------------
@dataclass(frozen=True)
class Enumeration:
    """Exact laws at horizon ``t`` from a fixed initial state.

    ``joint[(j, s)]`` is ``P(J_t = j, S_t = s)``; ``maximum[m]`` is
    ``P(M_t = m)`` with ``M_t = max_{0 <= n <= t} S_n``; values are in
    increment units (multiply by ``step`` for the original scale).
    """

    t: int
    start: int
    step: float
    joint: dict = field(repr=False)
    maximum: dict = field(repr=False)

    def sup_tail(self, u: float) -> float:
        """``P(M_t > u)``."""
        return float(sum(p for m, p in self.maximum.items() if m * self.step > u + 1e-12))


def enumerate_small(model: MapModel, t: int, start: int = 0, max_cells: int = MAX_PATHS) -> Enumeration:
    """Dynamic programme over ``(state, running sum, running max)``."""
    if t < 0 or t > 12:
        raise CapabilityError("enumeration supports horizons 0..12")
    inc = model.integer_increments()
    k = model.n_states
    cells = {(start, 0, 0): 1.0}
    for _ in range(t):
        nxt: dict = {}
        for (i, s, mx), p in cells.items():
            for j in range(k):
                pij = model.P[i, j]
                if pij == 0:
                    continue
                vals, probs = inc[i][j]
                for v, q in zip(vals, probs):
                    ns = s + int(v)
                    key = (j, ns, max(mx, ns))
                    nxt[key] = nxt.get(key, 0.0) + p * pij * q
        cells = nxt
        if len(cells) > max_cells:
            raise CapabilityError(f"enumeration exceeds {max_cells} cells")
    joint: dict = {}
    maximum: dict = {}
    for (j, s, mx), p in cells.items():
        joint[(j, s)] = joint.get((j, s), 0.0) + p
        maximum[mx] = maximum.get(mx, 0.0) + p
    return Enumeration(t, start, model.lattice_step, joint, maximum)


@dataclass(frozen=True)
class PathTable:
    states: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)

    @property
    def sums(self) -> np.ndarray:
        return self.increments.sum(axis=1)


def enumerate_paths(model: MapModel, t: int, start: int = 0) -> PathTable:
    """Every path of length ``t`` from ``start`` with its probability."""
    k = model.n_states
    width = max(len(model.increments[i][j][0]) for i, j in model._edges())
    if (k * width) ** t > MAX_PATHS:
        raise CapabilityError(f"more than {MAX_PATHS} paths")
    paths = [((start,), (), 1.0)]
    for _ in range(t):
        nxt = []
        for st, inc, p in paths:
            i = st[-1]
            for j in range(k):
                if model.P[i, j] == 0:
                    continue
                vals, probs = model.increments[i][j]
                for v, q in zip(vals, probs):
                    nxt.append((st + (j,), inc + (float(v),), p * model.P[i, j] * q))
        paths = nxt
    states = np.array([p[0] for p in paths], dtype=int)
    incs = np.array([p[1] for p in paths], dtype=float).reshape(len(paths), t)
    probs = np.array([p[2] for p in paths])
    return PathTable(states, incs, probs)


def path_probabilities(model: MapModel, table: PathTable) -> np.ndarray:
    """Probability of each path of ``table`` under ``model`` (same support)."""
    out = np.ones(table.states.shape[0])
    for n in range(table.increments.shape[1]):
        i = table.states[:, n]
        j = table.states[:, n + 1]
        x = table.increments[:, n]
        step = model.P[i, j]
        q = np.zeros_like(x)
        for a, b in set(zip(i.tolist(), j.tolist())):
            vals, probs = model.increments[a][b]
            sel = (i == a) & (j == b)
            idx = np.searchsorted(vals, x[sel])
            q[sel] = probs[np.clip(idx, 0, vals.size - 1)]
        out *= step * q
    return out


def likelihood_ratio(tilted: TiltedMap, table: PathTable) -> np.ndarray:
    """``L_n = h(J_n) / h(J_0) exp(theta S_n - n kappa)`` for every path."""
    n = table.increments.shape[1]
    h = tilted.h
    return h[table.states[:, -1]] / h[table.states[:, 0]] * np.exp(tilted.theta * table.sums - n * tilted.kappa)


def mean_likelihood_ratio(model: MapModel, theta: float, t: int, start: int = 0) -> float:
    """``E_start[L_t]`` by exact enumeration of ``(J_t, S_t)``."""
    kap, h = kappa_and_h(model, theta)
    enum = enumerate_small(model, t, start)
    total = 0.0
    for (j, s), p in enum.joint.items():
        total += p * h[j] / h[start] * math.exp(theta * s * enum.step - t * kap)
    return total


def sup_tail_exact(model: MapModel, u_max: float, theta: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Infinite-horizon ``P_i(M > u)`` on lattice levels ``0..u_max``.

    Solves ``psi_i(u) = sum_j p_ij sum_x H_ij(x) psi_j(u - x)`` with
    ``psi = 1`` below zero.  Levels beyond a truncation point are set to 0
    (giving a lower solution) or to the Lundberg bound (an upper solution);
    the truncation is pushed far enough that the two agree closely.

    Returns ``(levels, lower, upper)`` with arrays of shape ``(n_levels, n_states)``.
    """
    theta = lundberg_root(model) if theta is None else theta
    _, h = kappa_and_h(model, theta)
    step = model.lattice_step
    inc = model.integer_increments()
    k = model.n_states
    top = int(math.floor(u_max / step + 1e-9))
    neg = max(int(-v.min()) for i, j in model._edges() for v in [inc[i][j][0]] if v.size)
    # Truncate where the Lundberg tail is below 1e-16 relative to the levels of interest.
    extra = int(math.ceil(37.0 / (theta * step))) + neg
    V = top + extra
    n = (V + 1) * k

    def index(level, state):
        return level * k + state

    rows, cols, data = [], [], []
    rhs_lo = np.zeros(n)
    rhs_hi = np.zeros(n)
    for lvl in range(V + 1):
        for i in range(k):
            r = index(lvl, i)
            rows.append(r)
            cols.append(r)
            data.append(1.0)
            for j in range(k):
                if model.P[i, j] == 0:
                    continue
                vals, probs = inc[i][j]
                for v, q in zip(vals, probs):
                    w = model.P[i, j] * q
                    nl = lvl - int(v)
                    if nl < 0:
                        rhs_lo[r] += w
                        rhs_hi[r] += w
                    elif nl > V:
                        rhs_hi[r] += w * min(1.0, h[j] / h.min() * math.exp(-theta * nl * step))
                    else:
                        rows.append(r)
                        cols.append(index(nl, j))
                        data.append(-w)
    A = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    lo = spsolve(A.tocsc(), rhs_lo).reshape(V + 1, k)[: top + 1]
    hi = spsolve(A.tocsc(), rhs_hi).reshape(V + 1, k)[: top + 1]
    levels = np.arange(top + 1) * step
    return levels, np.clip(lo, 0, 1), np.clip(hi, 0, 1)


def first_passage_records(model: MapModel, u: float, t: int, start: int = 0):
    """Exact law of ``(tau(u), I(u), xi(u))`` restricted to ``tau(u) <= t``.

    Returns a dict mapping ``(n, state, overshoot)`` to probability.
    """
    inc = model.integer_increments()
    step = model.lattice_step
    level = int(math.floor(u / step + 1e-9))
    k = model.n_states
    alive = {(start, 0): 1.0}
    records: dict = {}
    for n in range(1, t + 1):
        nxt: dict = {}
        for (i, s), p in alive.items():
            for j in range(k):
                if model.P[i, j] == 0:
                    continue
                vals, probs = inc[i][j]
                for v, q in zip(vals, probs):
                    ns = s + int(v)
                    w = p * model.P[i, j] * q
                    if ns * step > u + 1e-12:
                        key = (n, j, (ns - level) * step - (u - level * step))
                        records[key] = records.get(key, 0.0) + w
                    else:
                        nxt[(j, ns)] = nxt.get((j, ns), 0.0) + w
        alive = nxt
    return records


def markov_tail_bound(model: MapModel, n: int, x: float, start: int = 0) -> float:
    """``P_start(S_n >= x) <= h_start / min h * exp(-theta x + n kappa(theta))``.

    Follows from the change of measure with ``L_n``; minimised over a
    ``theta`` grid in ``[1e-3, 20]`` and polished locally.
    """
    def log_bound(theta):
        try:
            kap, h = kappa_and_h(model, theta)
        except NumericError:
            return np.inf
        return math.log(h[start] / h.min()) - theta * x + n * kap

    grid = np.logspace(-3, math.log10(20.0), 120)
    vals = np.array([log_bound(t) for t in grid])
    k = int(np.argmin(vals))
    best = vals[k]
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(log_bound, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best = min(best, float(res.fun))
    return min(1.0, math.exp(best))


__all__ = [
    "MapModel",
    "TiltedMap",
    "SupTailBounds",
    "Enumeration",
    "PathTable",
    "reference_model",
    "f_hat",
    "kappa_and_h",
    "kappa",
    "tilt",
    "lundberg_root",
    "overshoot_constants",
    "sup_tail_bounds",
    "enumerate_small",
    "enumerate_paths",
    "path_probabilities",
    "likelihood_ratio",
    "mean_likelihood_ratio",
    "sup_tail_exact",
    "first_passage_records",
    "markov_tail_bound",
]
