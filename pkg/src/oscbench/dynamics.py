"""Time integration of the truncated semilinear oscillator.

The mode equations are xi_j' = -i omega_j xi_j - i dP/deta_j with
eta = conj(xi) on real states.  For a gauge nonlinearity g = G(|psi|^2)
the integrator is Strang splitting: the linear half-steps rotate each
mode exactly, and the nonlinear substep is an exact pointwise phase
rotation at Gauss-Hermite collocation points (|psi| is preserved there,
so that substep is exactly invertible too).  For general g the
nonlinear substep falls back to RK4 on the polynomial vector field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import gauss_hermite_nodes, scaled_poly_rows
from .frequencies import FrequencyVector, derive_seed
from .normal_form import NormalFormResult, apply_tau
from .poly import SparsePolynomial, expand_nonlinearity, validate_g_taylor
from .state import StateVector


class BlowUpError(RuntimeError):
    """The trajectory norm passed twice its initial value."""


def is_diagonal_g(g_taylor: dict) -> bool:
    """True when every Taylor term has the gauge form (psi conj(psi))^l."""
    return all(int(k[0]) == int(k[1]) for k in g_taylor)


def _gprime_coeffs(g: dict) -> list[tuple[int, float]]:
    """(l, l * g_ll) pairs: dG/drho for G(rho) = sum g_ll rho^l."""
    out = []
    for (l, m), c in sorted(g.items()):
        if l != m:
            raise ValueError("pointwise rotation needs a gauge nonlinearity")
        if abs(c.imag) > 1e-15 * max(1.0, abs(c)):
            raise ValueError("gauge coefficients must be real")
        out.append((l, l * c.real))
    return out


@dataclass
class TrajectoryRecord:
    """Saved observables along one run (states included for later analysis)."""

    t: np.ndarray
    xi: np.ndarray
    actions: np.ndarray
    energy: np.ndarray
    l2: np.ndarray
    norms: dict[float, np.ndarray]
    tail: np.ndarray
    meta: dict = field(default_factory=dict)

    def state(self, i: int) -> StateVector:
        return StateVector.real_point(self.xi[i])

    def drift_series(self, s: float) -> np.ndarray:
        """Sum_j j^{2s} |I_j(t) - I_j(0)| at each saved time."""
        j = np.arange(1, self.actions.shape[1] + 1, dtype=float)
        return np.sum(j ** (2 * s) * np.abs(self.actions - self.actions[0]), axis=1)


class _CollocationGrid:
    """Quadrature grid for the nonlinear substep, self-checked for aliasing.

    u holds the scaled mode sums u(x_i) = sum_j xi_j p_{j-1}(x_i), so
    psi(x_i) = u_i exp(-x_i^2/2) and no Gaussian factor is ever applied
    to a bare polynomial value.
    """

    def __init__(self, J: int, n: int):
        self.J = J
        self.n = n
        x, w = gauss_hermite_nodes(n)
        self.x = x
        self.w = w
        self.gauss = np.exp(-x * x)
        rows = scaled_poly_rows(J - 1, x)
        self.U = rows
        self.back = rows * w

    def to_grid(self, xi: np.ndarray) -> np.ndarray:
        return xi @ self.U

    def to_modes(self, u: np.ndarray) -> np.ndarray:
        return self.back @ u

    def rotate(self, xi: np.ndarray, dt: float,
               gprime: list[tuple[int, float]]) -> np.ndarray:
        u = self.to_grid(xi)
        rho = (u.real ** 2 + u.imag ** 2) * self.gauss
        theta = np.zeros_like(rho)
        for l, c in gprime:
            theta += c * rho ** (l - 1)
        return self.to_modes(u * np.exp(-1j * dt * theta))


def _choose_grid(J: int, xi0: np.ndarray, dt: float,
                 gprime: list[tuple[int, float]]) -> _CollocationGrid:
    """Double the node count until one nonlinear substep stabilizes.

    The substep output at n and 2n nodes must agree to 1e-13 relative;
    the cap 4J + 64 is generous for initial data carrying low modes.
    """
    n = max(2 * J, 32)
    cap = 4 * J + 64
    grid = _CollocationGrid(J, n)
    ref = grid.rotate(xi0, dt, gprime)
    scale = max(float(np.linalg.norm(xi0)), 1e-300)
    while True:
        n2 = 2 * grid.n
        if n2 > cap:
            warnings.warn(
                f"collocation self-check hit the node cap {cap}; aliasing may exceed 1e-13"
            )
            return grid
        grid2 = _CollocationGrid(J, n2)
        ref2 = grid2.rotate(xi0, dt, gprime)
        if float(np.linalg.norm(ref2 - ref)) <= 1e-13 * scale:
            return grid
        grid, ref = grid2, ref2


def _energy_quadratures(J: int, g: dict) -> list[tuple[int, float, np.ndarray, np.ndarray]]:
    """Per gauge term (l, g_ll): exact quadrature data for int |psi|^{2l} dx.

    Substituting x = t / sqrt(l) absorbs the l Gaussian pairs into the
    exp(-t^2) weight; nodes are sized for the full polynomial degree, so
    the reported energy is independent of the evolution grid.
    """
    out = []
    for (l, m), c in sorted(g.items()):
        t, w = gauss_hermite_nodes(l * (J - 1) + 2)
        rows = scaled_poly_rows(J - 1, t / math.sqrt(l))
        out.append((l, c.real / math.sqrt(l), w, rows))
    return out


def _gauge_energy(xi: np.ndarray, quads) -> float:
    total = 0.0
    for l, coeff, w, rows in quads:
        u = xi @ rows
        total += coeff * float(np.dot(w, (u.real ** 2 + u.imag ** 2) ** l))
    return total


def evolve(
    z0: StateVector,
    g_taylor: dict,
    freq: FrequencyVector,
    dt: float,
    T: float,
    scheme: str = "auto",
    save_stride: int | None = None,
    s_list: tuple[float, ...] = (1.0,),
    r_expand: int | None = None,
    rk4_poly: SparsePolynomial | None = None,
) -> TrajectoryRecord:
    """Integrate from a real state over [0, T]; dt < 0 runs backwards.

    Gauge nonlinearities use the splitting scheme; general real g falls
    back to RK4 on H_0 plus the expanded polynomial (supply rk4_poly to
    skip the expansion).  Observables are recorded every save_stride
    steps (default: ~1000 saves per run).
    """
    if not z0.is_real_point:
        raise ValueError("evolution starts from a real state (eta = conj xi)")
    if dt == 0.0 or T <= 0.0:
        raise ValueError("need dt != 0 and T > 0")
    g = validate_g_taylor(g_taylor) if g_taylor else {}
    if scheme == "auto":
        scheme = "strang" if (not g or is_diagonal_g(g)) else "rk4"
    if scheme not in ("strang", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "strang" and g and not is_diagonal_g(g):
        raise ValueError("splitting substep needs a gauge nonlinearity; use rk4")

    J = z0.J
    if freq.J < J:
        raise ValueError("frequency table shorter than state")
    omega = freq.omega[:J]
    n_steps = int(round(T / abs(dt)))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    if save_stride is None:
        save_stride = max(1, n_steps // 1000)

    xi = z0.xi.copy()
    norm0 = float(np.linalg.norm(xi))

    gprime = _gprime_coeffs(g) if (scheme == "strang" and g) else []
    grid = None
    quads = []
    poly = None
    if scheme == "strang":
        if gprime:
            grid = _choose_grid(J, xi, dt, gprime)
        quads = _energy_quadratures(J, g) if g else []
    else:
        poly = rk4_poly
        if poly is None:
            poly = expand_nonlinearity(g, J, r_expand or max(l + m for l, m in g))
        if poly.J != J:
            raise ValueError("polynomial cutoff does not match state")

    half_phase = np.exp(-0.5j * omega * dt)

    def rk4_rhs(x: np.ndarray) -> np.ndarray:
        z = StateVector.real_point(x)
        _, ge = poly.gradients(z)
        return -1j * (omega * x + ge)

    times = [0.0]
    states = [xi.copy()]
    t = 0.0
    for step in range(1, n_steps + 1):
        if scheme == "strang":
            xi = half_phase * xi
            if gprime:
                xi = grid.rotate(xi, dt, gprime)
            xi = half_phase * xi
        else:
            k1 = rk4_rhs(xi)
            k2 = rk4_rhs(xi + 0.5 * dt * k1)
            k3 = rk4_rhs(xi + 0.5 * dt * k2)
            k4 = rk4_rhs(xi + dt * k3)
            xi = xi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = step * dt
        nrm = float(np.linalg.norm(xi))
        if not np.isfinite(nrm) or nrm > 2.0 * norm0:
            raise BlowUpError(
                f"norm {nrm:.3e} at t={t:.4g} exceeds twice the initial {norm0:.3e}"
            )
        if step % save_stride == 0 or step == n_steps:
            times.append(t)
            states.append(xi.copy())

    xi_mat = np.array(states)
    actions = np.abs(xi_mat) ** 2
    j = np.arange(1, J + 1, dtype=float)
    l2 = actions.sum(axis=1)
    norms = {
        float(s): np.sqrt(2.0 * np.sum(j ** (2 * s) * actions, axis=1))
        for s in s_list
    }
    tail = actions[:, J // 2:].sum(axis=1)
    lin = actions @ omega
    if scheme == "strang":
        energy = lin + np.array([_gauge_energy(x, quads) for x in xi_mat])
    else:
        energy = lin + np.array([
            poly.evaluate(StateVector.real_point(x)).real for x in xi_mat
        ])
    return TrajectoryRecord(
        t=np.array(times),
        xi=xi_mat,
        actions=actions,
        energy=energy,
        l2=l2,
        norms=norms,
        tail=tail,
        meta={
            "dt": dt, "T": T, "scheme": scheme, "J": J,
            "n_grid": grid.n if grid is not None else None,
            "save_stride": save_stride,
            "g": {f"{l},{m}": [c.real, c.imag] for (l, m), c in g.items()},
        },
    )


def measure_action_drift(traj: TrajectoryRecord, s: float) -> float:
    """Max over the recorded grid of sum_j j^{2s} |I_j(t) - I_j(0)|."""
    return float(traj.drift_series(s).max())


def distance_to_torus(
    traj: TrajectoryRecord,
    result: NormalFormResult,
    s: float,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Distance proxy to the initial torus, in normalized coordinates.

    Each sampled state is pulled back through the inverse normalizing
    map; the proxy is (sum_j j^{2s} |sqrt I'_j(t) - sqrt I'_j(0)|^2)^{1/2}.
    Returns (times, distances).
    """
    idx = range(0, traj.xi.shape[0], stride)
    j = np.arange(1, traj.xi.shape[1] + 1, dtype=float)
    w = j ** (2 * s)
    roots = []
    times = []
    for i in idx:
        z = apply_tau(result, traj.state(i), inverse=True)
        acts = np.maximum(z.actions(), 0.0)
        roots.append(np.sqrt(acts))
        times.append(traj.t[i])
    roots = np.array(roots)
    d = np.sqrt(np.sum(w * (roots - roots[0]) ** 2, axis=1))
    return np.array(times), d


def low_mode_state(J: int, eps: float, s: float = 1.0, seed: int = 0,
                   n_active: int | None = None) -> StateVector:
    """Real state supported on the lowest modes with ||z||_s = eps.

    Amplitudes halve mode by mode; phases are drawn deterministically
    from the seed.  Keeping the support at J/4 or below leaves headroom
    for the nonlinear cascade inside the cutoff.
    """
    if n_active is None:
        n_active = max(1, min(4, J // 4))
    xi = np.zeros(J, complex)
    for jj in range(1, n_active + 1):
        phase = 2.0 * math.pi * (derive_seed(seed, "phase", jj) / 2.0 ** 64)
        xi[jj - 1] = 2.0 ** (1 - jj) * np.exp(1j * phase)
    z = StateVector.real_point(xi)
    current = z.norm_s(s)
    return StateVector.real_point(xi * (eps / current))
