"""Classical flow in the punctured plane under a linearly ramped flux.

The Hamiltonian is H(s) = (1/2)(p - a(s,q))^2 with

    a(s, q) = (1/2 - phi * s / |q|^2) * q_perp,   q_perp = (-q2, q1),

in rescaled units (unit cyclotron frequency, dimensionless ramp rate phi).
The module integrates the flow, splits the motion into guiding center plus
cyclotron circle, tracks the conserved quantity

    K = H - phi * arg q   (arg on a continuous branch),

and measures both asymptotic regimes: outgoing drift |q| ~ sqrt(2 phi s)
with H approaching a finite limit a0^2/(4 phi), and the bound-center past
with H ~ phi |s|.

Momentum equation, derived once from H and checked against finite
differences of H in the tests: with r2 = |q|^2 and g = 1/2 - phi*s/r2,

    dq/ds = v = p - g * q_perp,
    dp/ds = (2 phi s (v . q_perp) / r2^2) * q - g * v_perp.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    BranchError,
    NotConverged,
    PunctureHit,
    StepFailure,
    ValidationError,
)

R_GUARD = 1e-8

TOL_MIN, TOL_MAX = 1e-13, 1e-6


def perp(w):
    """Rotate a 2-vector by +90 degrees: (x, y) -> (-y, x)."""
    w = np.asarray(w, dtype=float)
    return np.stack([-w[..., 1], w[..., 0]], axis=-1)


@dataclass(frozen=True)
class FluxParams:
    """Rescaled flux ramp rate; the asymptotic statements need phi > 0."""

    phi: float

    def __post_init__(self):
        if not np.isfinite(self.phi) or self.phi <= 0:
            raise ValidationError(f"phi must be positive and finite, got {self.phi!r}")


@dataclass(frozen=True)
class PhaseState:
    """Phase-space point (q, p) at rescaled time s; q away from the origin."""

    s: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(2)
        p = np.asarray(self.p, dtype=float).reshape(2)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.s)):
            raise ValidationError("phase state must be finite")
        if np.hypot(q[0], q[1]) <= R_GUARD:
            raise ValidationError("position sits on the puncture (|q| <= guard radius)")


@dataclass(frozen=True)
class GuidingDecomposition:
    """Center/velocity split q = c + v_perp with action-angle data.

    I1 = |c|^2/2, I2 = H = |v|^2/2, phi1 = arg c, and phi2 is fixed by
    q = |c| e(phi1) + |v| e(-phi2) with e(t) = (cos t, sin t); degenerate
    zero vectors get angle 0 by convention.
    """

    s: float
    c: np.ndarray
    v: np.ndarray
    I1: float
    I2: float
    phi1: float
    phi2: float


@dataclass(frozen=True)
class MotionConstant:
    """Value of the conserved K plus per-trajectory branch bookkeeping.

    ``branch`` is the unwrapped arg q used for this sample; passing the
    instance as ``prev`` to the next motion_constant call continues the
    branch.  ``s0`` is the trajectory constant of the center-energy law
    |c|^2/2 - H = phi (s - s0).
    """

    K: float
    s0: float
    branch: float


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the flow; arrays indexed by sample."""

    params: FluxParams
    s: np.ndarray
    q: np.ndarray  # (n, 2)
    p: np.ndarray  # (n, 2)
    puncture_hit: bool = False
    s_hit: Optional[float] = None

    def __len__(self):
        return self.s.size

    def state(self, i):
        return PhaseState(s=float(self.s[i]), q=self.q[i], p=self.p[i])


def vector_potential(s, q, params):
    """a(s, q) = (1/2 - phi s/|q|^2) q_perp; singular at the origin."""
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1)
    if np.any(r2 == 0.0):
        raise ValidationError("vector potential is singular at q = 0")
    g = 0.5 - params.phi * np.asarray(s) / r2
    return np.expand_dims(g, -1) * perp(q) if q.ndim > 1 else g * perp(q)


def velocity(s, q, p, params):
    """Kinetic velocity v = p - a(s, q)."""
    return np.asarray(p, dtype=float) - vector_potential(s, q, params)


def hamiltonian(state, params):
    """H = |v|^2 / 2 >= 0."""
    v = velocity(state.s, state.q, state.p, params)
    return 0.5 * float(v @ v)


def flow_rhs(state, params):
    """Canonical equations (dq/ds, dp/ds) at the given state."""
    dq, dp = _rhs_split(state.s, state.q, state.p, params.phi)
    return dq, dp


def _rhs_split(s, q, p, phi):
    r2 = q[0] * q[0] + q[1] * q[1]
    if r2 == 0.0:
        raise ValidationError("flow is singular at q = 0")
    g = 0.5 - phi * s / r2
    vx = p[0] + g * q[1]
    vy = p[1] - g * q[0]
    w = 2.0 * phi * s * (vy * q[0] - vx * q[1]) / (r2 * r2)
    return (np.array([vx, vy]), np.array([w * q[0] + g * vy, w * q[1] - g * vx]))


def _rhs_flat(s, y, phi):
    qx, qy, px, py = y
    r2 = qx * qx + qy * qy
    g = 0.5 - phi * s / r2
    vx = px + g * qy
    vy = py - g * qx
    w = 2.0 * phi * s * (vy * qx - vx * qy) / (r2 * r2)
    return (vx, vy, w * qx + g * vy, w * qy - g * vx)


def integrate(initial, s_end, params, tol=1e-10, samples=None, r_guard=R_GUARD):
    """Integrate the flow from ``initial.s`` to ``s_end`` (either direction).

    ``samples`` may be an int (uniform sample count, default 513) or an
    explicit monotone array of times inside the span.  Raises PunctureHit
    (with the partial trajectory attached) if |q| reaches the guard
    radius (default 1e-8; a crossing that narrow is only caught when the
    trajectory genuinely lingers near the flux line), StepFailure on
    integrator breakdown.
    """
    if not (TOL_MIN <= tol <= TOL_MAX):
        raise ValidationError(f"tol must lie in [{TOL_MIN}, {TOL_MAX}], got {tol!r}")
    if not (0.0 < r_guard < 1.0):
        raise ValidationError(f"r_guard must lie in (0, 1), got {r_guard!r}")
    s0 = float(initial.s)
    s_end = float(s_end)
    if s_end == s0:
        return Trajectory(params=params, s=np.array([s0]),
                          q=initial.q[None, :].copy(), p=initial.p[None, :].copy())
    if samples is None:
        samples = 513
    if np.isscalar(samples):
        t_eval = np.linspace(s0, s_end, int(samples))
    else:
        t_eval = np.asarray(samples, dtype=float)
        span = sorted((s0, s_end))
        if np.any(t_eval < span[0] - 1e-12) or np.any(t_eval > span[1] + 1e-12):
            raise ValidationError("sample times fall outside the integration span")

    phi = params.phi

    def puncture_event(s, y, *_args):
        return y[0] * y[0] + y[1] * y[1] - r_guard * r_guard

    puncture_event.terminal = True

    y0 = np.concatenate([initial.q, initial.p])
    sol = solve_ivp(_rhs_flat, (s0, s_end), y0, method="DOP853",
                    rtol=tol, atol=tol * 1e-2, t_eval=t_eval,
                    events=puncture_event, args=(phi,), dense_output=False)
    if sol.status == -1:
        raise StepFailure(f"integrator failed: {sol.message}")
    traj = Trajectory(params=params, s=sol.t, q=sol.y[:2].T.copy(), p=sol.y[2:].T.copy(),
                      puncture_hit=(sol.status == 1),
                      s_hit=float(sol.t_events[0][0]) if sol.status == 1 else None)
    if sol.status == 1:
        raise PunctureHit(traj.s_hit, trajectory=traj)
    return traj


def to_guiding_center(state, params):
    """Split a state into guiding center c = q - v_perp and velocity v."""
    q = state.q
    if np.hypot(q[0], q[1]) == 0.0:
        raise ValidationError("guiding split undefined at q = 0")
    v = velocity(state.s, q, state.p, params)
    c = q - perp(v)
    nc = np.hypot(c[0], c[1])
    nv = np.hypot(v[0], v[1])
    phi1 = float(np.arctan2(c[1], c[0])) if nc > 0 else 0.0
    # v_perp = |v| e(-phi2)  =>  phi2 = -arg(v_perp)
    vp = perp(v)
    phi2 = float(-np.arctan2(vp[1], vp[0])) if nv > 0 else 0.0
    return GuidingDecomposition(s=float(state.s), c=c, v=v,
                                I1=0.5 * float(nc * nc), I2=0.5 * float(nv * nv),
                                phi1=phi1, phi2=phi2)


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if np.ndim(w) else (np.pi if w == -np.pi else w)


def motion_constant(decomp, params, prev=None):
    """Conserved K = I2 - phi * arg(q) with a continuous arg branch.

    The vector sqrt(2 I1) e(phi1) + sqrt(2 I2) e(-phi2) is q itself, so the
    branch is tracked on arg q.  The first call fixes the branch in
    (-pi, pi]; subsequent calls must stay within pi of ``prev.branch``,
    otherwise the sampling is too coarse to unwrap and BranchError is
    raised.
    """
    qvec = (np.sqrt(2.0 * decomp.I1) * np.array([np.cos(decomp.phi1), np.sin(decomp.phi1)])
            + np.sqrt(2.0 * decomp.I2) * np.array([np.cos(decomp.phi2), -np.sin(decomp.phi2)]))
    if np.hypot(qvec[0], qvec[1]) == 0.0:
        raise ValidationError("arg undefined: reconstructed q vanishes")
    raw = float(np.arctan2(qvec[1], qvec[0]))
    if prev is None:
        branch = raw
    else:
        delta = _wrap_angle(raw - prev.branch)
        if abs(delta) >= np.pi * (1.0 - 1e-9):
            raise BranchError("consecutive samples too far apart to unwrap; refine sampling")
        branch = prev.branch + delta
    K = decomp.I2 - params.phi * branch
    s0 = decomp.s - (decomp.I1 - decomp.I2) / params.phi
    return MotionConstant(K=float(K), s0=float(s0), branch=branch)


def guiding_series(traj):
    """Vectorized guiding data along a trajectory: (c, v, I1, H)."""
    phi = traj.params.phi
    r2 = np.sum(traj.q * traj.q, axis=1)
    g = 0.5 - phi * traj.s / r2
    v = traj.p - g[:, None] * np.stack([-traj.q[:, 1], traj.q[:, 0]], axis=1)
    c = traj.q - np.stack([-v[:, 1], v[:, 0]], axis=1)
    I1 = 0.5 * np.sum(c * c, axis=1)
    H = 0.5 * np.sum(v * v, axis=1)
    return c, v, I1, H


def unwrapped_arg(traj):
    """Continuous branch of arg q along the samples, first sample in (-pi, pi]."""
    raw = np.arctan2(traj.q[:, 1], traj.q[:, 0])
    d = np.diff(raw)
    dw = np.remainder(d + np.pi, 2.0 * np.pi) - np.pi
    if np.any(np.abs(dw) >= np.pi * (1.0 - 1e-9)):
        raise BranchError("consecutive samples too far apart to unwrap; refine sampling")
    return np.concatenate([[raw[0]], raw[0] + np.cumsum(dw)])


def motion_constant_series(traj):
    """K(s) along the trajectory on one continuous branch."""
    _, _, I1, H = guiding_series(traj)
    return H - traj.params.phi * unwrapped_arg(traj)


@dataclass(frozen=True)
class CenterEnergyFit:
    s0: float
    slope: float
    max_residual: float


def center_energy_fit(traj, params):
    """Fit |c|^2/2 - H against s; the law reads |c|^2/2 - H = phi (s - s0).

    Returns the free-fit slope (should equal phi), the intercept-derived
    s0, and the worst absolute residual of the exact-slope relation.
    """
    if len(traj) < 10:
        raise ValidationError("center-energy fit needs at least 10 samples")
    _, _, I1, H = guiding_series(traj)
    y = I1 - H
    slope, intercept = np.polyfit(traj.s, y, 1)
    s0 = -float(intercept) / params.phi
    resid = np.max(np.abs(y - params.phi * (traj.s - s0)))
    return CenterEnergyFit(s0=s0, slope=float(slope), max_residual=float(resid))


@dataclass(frozen=True)
class ForwardAsymptotics:
    a0: float
    drift_angle: float
    H_limit: float
    angle_residual: float
    q_over_sqrt_s: float
    H_tail_spread: float


def asymptotics_forward(traj, params, tail_fraction=0.25, spread_tol=0.05):
    """Outgoing-drift diagnostics on the tail of a forward trajectory.

    H_limit is the tail average of H, a0 = sqrt(4 phi H_limit), the drift
    angle is the circular mean of arg q over the tail, and the residual
    compares it against the prediction a0^2/(4 phi^2) - K/phi (mod 2 pi).
    K is evaluated at the first sample; a shift of K by 2 pi phi leaves the
    prediction invariant mod 2 pi, so no branch tracking is needed here.
    """
    if traj.s[-1] < 1e3:
        raise ValidationError("forward asymptotics need the trajectory to reach s >= 1e3")
    _, _, I1, H = guiding_series(traj)
    n_tail = max(8, int(len(traj) * tail_fraction))
    tail = slice(len(traj) - n_tail, None)
    H_limit = float(np.mean(H[tail]))
    spread = float(np.std(H[tail]) / H_limit) if H_limit > 0 else np.inf
    if spread > spread_tol:
        raise NotConverged(f"tail of H has not settled (relative spread {spread:.3g})")
    a0 = float(np.sqrt(4.0 * params.phi * H_limit))
    ang = np.arctan2(traj.q[tail, 1], traj.q[tail, 0])
    drift = float(np.angle(np.mean(np.exp(1j * ang))))
    K = float(H[0] - params.phi * np.arctan2(traj.q[0, 1], traj.q[0, 0]))
    predicted = a0 * a0 / (4.0 * params.phi ** 2) - K / params.phi
    residual = abs(_wrap_angle(drift - predicted))
    ratio = float(np.hypot(*traj.q[-1]) / np.sqrt(traj.s[-1]))
    return ForwardAsymptotics(a0=a0, drift_angle=drift, H_limit=H_limit,
                              angle_residual=float(residual),
                              q_over_sqrt_s=ratio, H_tail_spread=spread)


@dataclass(frozen=True)
class BackwardAsymptotics:
    H_over_abs_s: float
    q_over_sqrt_abs_s: float


def asymptotics_backward(traj, params):
    """Bound-center diagnostics at the most negative sampled time."""
    i = int(np.argmin(traj.s))
    s = traj.s[i]
    if s >= -1e2:
        raise ValidationError("backward asymptotics need the trajectory to reach s <= -1e2")
    _, _, _, H = guiding_series(traj)
    return BackwardAsymptotics(H_over_abs_s=float(H[i] / abs(s)),
                               q_over_sqrt_abs_s=float(np.hypot(*traj.q[i]) / np.sqrt(abs(s))))
