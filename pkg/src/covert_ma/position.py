"""Per-antenna position updates via cosine expansions and quadratic Taylor bounds.

With every antenna but the n-th frozen, each received-power term is a
constant plus a sum of ``m * cos(c d^T t + psi)`` with ``c = 2 pi / lambda``.
Replacing each cosine by a quadratic with curvature ``+-c^2`` along ``d``
gives global upper (lower) bounds that are tight at the anchor; these are
folded into a 2x2 quadratic ``t^T P t + q^T t + r``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PathSet

# relative size below which an expansion term is dropped
_TERM_FLOOR = 1e-18


@dataclass(frozen=True, eq=False)
class CosineTermSet:
    """``constant + sum_i magnitudes[i] * cos(c * directions[i] . t + phases[i])``."""

    magnitudes: np.ndarray
    directions: np.ndarray
    phases: np.ndarray
    constant: float
    wavenumber: float

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        arg = self.wavenumber * (t @ self.directions.T) + self.phases
        return self.constant + np.cos(arg) @ self.magnitudes

    @classmethod
    def build(cls, magnitudes, directions, phases, constant, wavenumber):
        magnitudes = np.asarray(magnitudes, dtype=float).ravel()
        directions = np.asarray(directions, dtype=float).reshape(-1, 2)
        phases = np.asarray(phases, dtype=float).ravel()
        if magnitudes.size:
            keep = magnitudes > _TERM_FLOOR * magnitudes.max()
            magnitudes, directions, phases = magnitudes[keep], directions[keep], phases[keep]
        return cls(magnitudes, directions, phases, float(constant), wavenumber)


@dataclass(frozen=True)
class QuadraticSurrogate:
    """``t^T P t + q^T t + r`` on the plane."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.einsum("...i,ij,...j->...", t, self.P, t) + t @ self.q + self.r

    def gradient(self, t) -> np.ndarray:
        return 2.0 * self.P @ t + self.q

    def __add__(self, other: "QuadraticSurrogate") -> "QuadraticSurrogate":
        return QuadraticSurrogate(self.P + other.P, self.q + other.q, self.r + other.r)

    def scaled(self, a: float) -> "QuadraticSurrogate":
        return QuadraticSurrogate(a * self.P, a * self.q, a * self.r)

    @classmethod
    def zero(cls) -> "QuadraticSurrogate":
        return cls(np.zeros((2, 2)), np.zeros(2), 0.0)


def _wavenumber(wavelength: float) -> float:
    return 2.0 * np.pi / wavelength


def expand_received_power(n, w, paths: PathSet, positions, wavelength) -> CosineTermSet:
    """Expansion of ``|w^H h(T)|^2`` as a function of antenna ``n``'s position.

    Self terms pair paths (l, l') of antenna n with direction rho_l - rho_l';
    cross terms pair antenna n with each fixed antenna n' and carry direction
    rho_l with the fixed antenna's phase folded into the offset.
    """
    c = _wavenumber(wavelength)
    rho = paths.directions
    g = paths.responses
    L = g.shape[0]
    others = [m for m in range(len(w)) if m != n]

    # self: alpha^{n,n,l,l'} = |w_n|^2 g_l^* g_l'
    alpha_self = abs(w[n]) ** 2 * np.outer(g.conj(), g)
    off = ~np.eye(L, dtype=bool)
    mags = [np.abs(alpha_self[off])]
    dirs = [(rho[:, None, :] - rho[None, :, :])[off]]
    phases = [np.angle(alpha_self[off])]

    # cross: 2|alpha^{n,n',l,l'}| cos(c(t.rho_l - t_n'.rho_l') + angle alpha)
    if others:
        t_other = np.asarray(positions, dtype=float)[others]                   # (N-1, 2)
        alpha = (w[n] * np.conj(w[others]))[:, None, None] * np.outer(g.conj(), g)[None]
        fixed_phase = c * (t_other @ rho.T)                                    # (N-1, L')
        mags.append(2.0 * np.abs(alpha).ravel())
        dirs.append(np.broadcast_to(rho[None, :, None, :], alpha.shape + (2,)).reshape(-1, 2))
        phases.append((np.angle(alpha) - fixed_phase[:, None, :]).ravel())

    # C1 plus the l = l' self terms: |sum_{n' != n} w_n'^* h_n'|^2 + |w_n|^2 ||g||^2
    if others:
        h_other = np.exp(-1j * c * (t_other @ rho.T)) @ g
        s = np.vdot(w[others], h_other)
    else:
        s = 0.0
    constant = abs(s) ** 2 + abs(w[n]) ** 2 * float(np.sum(np.abs(g) ** 2))
    return CosineTermSet.build(
        np.concatenate(mags), np.concatenate(dirs), np.concatenate(phases), constant, c
    )


def expand_correlation(n, w, phi, paths: PathSet, positions, wavelength) -> CosineTermSet:
    """Expansion of ``Re{phi w^H h(T)}`` in antenna ``n``'s position.

    Coefficients theta_l = w_n phi^* g_l^*; the other antennas form the constant.
    """
    c = _wavenumber(wavelength)
    rho = paths.directions
    g = paths.responses
    theta = w[n] * np.conj(phi) * g.conj()
    others = [m for m in range(len(w)) if m != n]
    if others:
        t_other = np.asarray(positions, dtype=float)[others]
        h_other = np.exp(-1j * c * (t_other @ rho.T)) @ g
        constant = float(np.real(phi * np.vdot(w[others], h_other)))
    else:
        constant = 0.0
    return CosineTermSet.build(np.abs(theta), rho, np.angle(theta), constant, c)


def psi_ub(t, anchor, direction, phase, wavelength):
    """Quadratic majorizer of ``cos(c d.t + phase)`` expanded at ``anchor``."""
    return _psi(t, anchor, direction, phase, wavelength, 1.0)


def psi_lb(t, anchor, direction, phase, wavelength):
    """Quadratic minorizer of ``cos(c d.t + phase)`` expanded at ``anchor``."""
    return _psi(t, anchor, direction, phase, wavelength, -1.0)


def _psi(t, anchor, direction, phase, wavelength, sign):
    c = _wavenumber(wavelength)
    direction = np.asarray(direction, dtype=float)
    a = c * (direction @ np.asarray(anchor, dtype=float)) + phase
    proj = (np.asarray(t, dtype=float) - anchor) @ direction
    return np.cos(a) - c * np.sin(a) * proj + sign * 0.5 * c * c * proj ** 2


def fold(terms: CosineTermSet, anchor, upper: bool) -> QuadraticSurrogate:
    """Replace each cosine by its Taylor bound at ``anchor`` and collect P, q, r."""
    c = terms.wavenumber
    m, d = terms.magnitudes, terms.directions
    anchor = np.asarray(anchor, dtype=float)
    u0 = d @ anchor
    a = c * u0 + terms.phases
    curv = (0.5 if upper else -0.5) * c * c * m
    P = (d.T * curv) @ d
    q = -(c * m * np.sin(a)) @ d - 2.0 * (curv * u0) @ d
    r = terms.constant + float(m @ (np.cos(a) + c * np.sin(a) * u0) + curv @ (u0 * u0))
    return QuadraticSurrogate(P, q, r)


def zeta1(n, w_i, paths_k: PathSet, positions, wavelength) -> QuadraticSurrogate:
    """Convex majorizer of ``|w_i^H h_k|^2`` in t_n, tight at the current t_n."""
    terms = expand_received_power(n, w_i, paths_k, positions, wavelength)
    return fold(terms, positions[n], upper=True)


def zeta2(n, w_k, phi_k, paths_k: PathSet, positions, wavelength) -> QuadraticSurrogate:
    """Concave minorizer of ``Re{phi_k w_k^H h_k}`` in t_n, tight at the current t_n."""
    terms = expand_correlation(n, w_k, phi_k, paths_k, positions, wavelength)
    return fold(terms, positions[n], upper=False)


def zeta3(n, W, warden: PathSet, positions, wavelength) -> list[QuadraticSurrogate]:
    """Majorizers of each user's leakage ``|w_k^H h_0|^2`` in t_n."""
    return [zeta1(n, W[:, k], warden, positions, wavelength) for k in range(W.shape[1])]


def min_distance_linearization(anchor, other) -> tuple[np.ndarray, float]:
    """Unit normal ``u`` and offset ``u.other`` so that ``u.(t - other)``
    lower-bounds ``||t - other||`` with equality at ``anchor``."""
    diff = np.asarray(anchor, dtype=float) - np.asarray(other, dtype=float)
    dist = float(np.hypot(*diff))
    if dist == 0.0:
        raise ValueError("anchor coincides with another antenna")
    normal = diff / dist
    return normal, float(normal @ other)


# --- the 2-D convex subproblem -------------------------------------------------


@dataclass(frozen=True)
class SubproblemResult:
    position: np.ndarray
    flag: str = ""


def clip_polygon(vertices: np.ndarray, normal, bound: float) -> np.ndarray:
    """Intersect a convex polygon (CCW vertices) with ``normal . t >= bound``."""
    if len(vertices) == 0:
        return vertices
    vals = vertices @ normal - bound
    out = []
    count = len(vertices)
    for i in range(count):
        j = (i + 1) % count
        vi, vj = vals[i], vals[j]
        if vi >= 0:
            out.append(vertices[i])
        if (vi >= 0) != (vj >= 0):
            s = vi / (vi - vj)
            out.append(vertices[i] + s * (vertices[j] - vertices[i]))
    return np.array(out).reshape(-1, 2)


def feasible_polygon(region_size: float, halfplanes) -> np.ndarray:
    A = region_size
    poly = np.array([[0.0, 0.0], [A, 0.0], [A, A], [0.0, A]])
    for normal, bound in halfplanes:
        poly = clip_polygon(poly, normal, bound)
    return poly


def _constraint_rows(halfplanes, region_size):
    """All linear constraints as ``normals @ t >= bounds``, box included."""
    rows = [((1.0, 0.0), 0.0), ((-1.0, 0.0), -region_size),
            ((0.0, 1.0), 0.0), ((0.0, -1.0), -region_size)]
    rows += [(tuple(n), b) for n, b in halfplanes]
    normals = np.array([r[0] for r in rows], dtype=float)
    bounds = np.array([r[1] for r in rows], dtype=float)
    return normals, bounds


def polygon_qp(P, q, poly: np.ndarray, rows) -> np.ndarray:
    """Exact minimizer of the convex quadratic ``t^T P t + q^T t`` over a polygon.

    Either the stationary point satisfies every row of ``rows``, or the
    minimum lies on an edge, where the problem is a 1-D quadratic on [0, 1].
    """
    a, b, d = P[0, 0], P[0, 1], P[1, 1]
    det = a * d - b * b
    if a > 0 and det > 1e-12 * (a + d) ** 2:
        t = np.array([-(d * q[0] - b * q[1]), -(a * q[1] - b * q[0])]) / (2.0 * det)
        normals, bounds = rows
        if np.all(normals @ t >= bounds - 1e-12 * (1.0 + np.abs(bounds))):
            return t
    edge = np.roll(poly, -1, axis=0) - poly
    Pe = edge @ P
    curv = np.einsum("ei,ei->e", Pe, edge)
    slope = 2.0 * np.einsum("ei,ei->e", Pe, poly) + edge @ q
    s = np.zeros_like(curv)
    pos = curv > 0
    s[pos] = -slope[pos] / (2.0 * curv[pos])
    s[~pos & (slope < 0)] = 1.0
    s = np.clip(s, 0.0, 1.0)
    cand = poly + s[:, None] * edge
    vals = np.einsum("ei,ij,ej->e", cand, P, cand) + cand @ q
    return cand[int(np.argmin(vals))]


def solve_position_subproblem(
    objective: QuadraticSurrogate,
    leakage: QuadraticSurrogate,
    p_th: float,
    halfplanes,
    region_size: float,
    anchor,
) -> SubproblemResult:
    """Minimize a convex quadratic over box, half-planes and one convex
    quadratic cap ``leakage(t) <= p_th``.

    The cap is dualized: for multiplier mu the Lagrangian is a convex QP over
    the polygon, solved exactly; mu is bisected until the cap holds with
    (near) equality, always keeping the feasible side of the bracket.
    """
    anchor = np.asarray(anchor, dtype=float)
    poly = feasible_polygon(region_size, halfplanes)
    if len(poly) < 3:
        return SubproblemResult(anchor, "empty feasible polygon")

    # cap normalized to (leakage - p_th) / p_th <= 0
    cap = leakage.scaled(1.0 / p_th)
    cap = QuadraticSurrogate(cap.P, cap.q, cap.r - 1.0)

    rows = _constraint_rows(halfplanes, region_size)

    def argmin(mu):
        return polygon_qp(objective.P + mu * cap.P, objective.q + mu * cap.q, poly, rows)

    t = argmin(0.0)
    if cap(t) <= 0.0:
        return _accept(objective, t, anchor)

    obj_scale = max(abs(objective(anchor)), float(np.abs(objective.P).max()) * region_size ** 2, 1e-300)
    hi = obj_scale
    t_hi = argmin(hi)
    for _ in range(400):
        if cap(t_hi) <= 0.0:
            break
        hi *= 2.0
        t_hi = argmin(hi)
    else:
        return SubproblemResult(anchor, "covertness cap unreachable")
    lo = 0.0
    for _ in range(200):
        # stop once the bracket is tight or the cap is active to 1e-10
        if (hi - lo) <= 1e-13 * hi or cap(t_hi) >= -1e-10:
            break
        mid = 0.5 * (lo + hi)
        t_mid = argmin(mid)
        if cap(t_mid) <= 0.0:
            hi, t_hi = mid, t_mid
        else:
            lo = mid
    return _accept(objective, t_hi, anchor)


def _accept(objective, t, anchor) -> SubproblemResult:
    if objective(t) <= objective(anchor):
        return SubproblemResult(np.asarray(t, dtype=float))
    return SubproblemResult(anchor, "")


# --- assembly -------------------------------------------------------------------


def block_objective(t, n, W, phi, beta, user_paths, positions, wavelength) -> np.ndarray:
    """Position-dependent part of the WMMSE objective as a function of t_n.

    ``sum_k beta_k (|phi_k|^2 sum_i |w_i^H h_k|^2 - 2 Re{phi_k w_k^H h_k})``;
    ``t`` may carry leading batch dimensions.
    """
    t = np.asarray(t, dtype=float)
    c = _wavenumber(wavelength)
    total = np.zeros(t.shape[:-1])
    for k, paths in enumerate(user_paths):
        h_n = np.exp(-1j * c * (t @ paths.directions.T)) @ paths.responses       # (...,)
        h_fixed = np.exp(-1j * c * (positions @ paths.directions.T)) @ paths.responses
        base = W.conj().T @ h_fixed - np.conj(W[n]) * h_fixed[n]                 # (K,)
        gains = base + np.multiply.outer(h_n, np.conj(W[n]))                     # (..., K)
        power = np.sum(np.abs(gains) ** 2, axis=-1)
        corr = np.real(phi[k] * gains[..., k])
        total = total + beta[k] * (abs(phi[k]) ** 2 * power - 2.0 * corr)
    return total


def leakage_power(t, n, W, warden: PathSet, positions, wavelength) -> np.ndarray:
    """True warden signal power with antenna ``n`` moved to ``t`` (batchable)."""
    t = np.asarray(t, dtype=float)
    c = _wavenumber(wavelength)
    h_n = np.exp(-1j * c * (t @ warden.directions.T)) @ warden.responses
    h_fixed = np.exp(-1j * c * (positions @ warden.directions.T)) @ warden.responses
    base = W.conj().T @ h_fixed - np.conj(W[n]) * h_fixed[n]
    gains = base + np.multiply.outer(h_n, np.conj(W[n]))
    return np.sum(np.abs(gains) ** 2, axis=-1)


def assemble_objective(n, W, phi, beta, user_paths, positions, wavelength) -> QuadraticSurrogate:
    """Convex surrogate ``sum_k beta_k (|phi_k|^2 sum_i zeta1^{i,k} - 2 zeta2^k)``."""
    total = QuadraticSurrogate.zero()
    K = W.shape[1]
    for k, paths in enumerate(user_paths):
        weight = beta[k] * abs(phi[k]) ** 2
        if weight > 0:
            for i in range(K):
                total = total + zeta1(n, W[:, i], paths, positions, wavelength).scaled(weight)
        total = total + zeta2(n, W[:, k], phi[k], paths, positions, wavelength).scaled(-2.0 * beta[k])
    return total


def sca_update_antenna(
    n, W, phi, beta, scenario, positions, p_th: float
) -> tuple[np.ndarray, str]:
    """Move antenna ``n`` by solving its convex surrogate subproblem.

    The candidate is accepted only if the true block objective does not rise
    and the true spacing and covertness constraints hold; otherwise the
    antenna stays put and the reason is returned as a flag.
    """
    cfg = scenario.config
    lam = cfg.wavelength
    positions = np.asarray(positions, dtype=float)
    anchor = positions[n]
    objective = assemble_objective(n, W, phi, beta, scenario.users, positions, lam)
    leak = QuadraticSurrogate.zero()
    for z in zeta3(n, W, scenario.warden, positions, lam):
        leak = leak + z
    halfplanes = []
    for m in range(len(positions)):
        if m == n:
            continue
        normal, offset = min_distance_linearization(anchor, positions[m])
        halfplanes.append((normal, offset + cfg.min_spacing))
    result = solve_position_subproblem(objective, leak, p_th, halfplanes, cfg.region_size, anchor)
    cand = result.position
    if np.allclose(cand, anchor, rtol=0, atol=0):
        return anchor.copy(), result.flag

    others = np.delete(positions, n, axis=0)
    if len(others) and np.min(np.hypot(*(others - cand).T)) < cfg.min_spacing - 1e-9:
        return anchor.copy(), "spacing violated by candidate"
    if leakage_power(cand, n, W, scenario.warden, positions, lam) > p_th * (1 + 1e-9):
        return anchor.copy(), "covertness violated by candidate"
    before = block_objective(anchor, n, W, phi, beta, scenario.users, positions, lam)
    after = block_objective(cand, n, W, phi, beta, scenario.users, positions, lam)
    if after > before + 1e-12 * max(abs(before), 1.0):
        return anchor.copy(), "surrogate step did not improve the true objective"
    return np.clip(cand, 0.0, cfg.region_size), result.flag
