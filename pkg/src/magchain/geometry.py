"""Bend parameterization and constant-curvature chain kinematics.

Conventions (SI units everywhere: meters, radians):
    - A bend is encoded as the 2-vector gamma = psi * (-sin(phi), cos(phi)),
      where psi is the total bend angle and phi the bending-plane angle.
      The encoding is singularity-free at psi = 0 (gamma = 0, phi reported
      as 0 by convention).
    - The chain is a discrete constant-curvature arc of n rigid ball-to-ball
      links of length d. Ball i sits at
          p_i = p0 + R_B @ sum_{k=1..i} R(gamma, k/n) @ (d * e3)
      and carries a dipole moment tangent to the curve,
          mu_i = R_B @ R(gamma, i/n) @ (mu * e3),
      where R(gamma, f) is the rotation by angle f*psi about the in-plane
      axis (gamma_1, gamma_2, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_E3 = np.array([0.0, 0.0, 1.0])

# Below this rotation angle the Rodrigues coefficients switch to their
# second-order Taylor forms to avoid 0/0.
SMALL_ANGLE = 1e-8

#: Tolerance for accepting a rotation matrix as orthonormal with det +1.
ROTATION_TOL = 1e-12


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = -((-angle + np.pi) % (2.0 * np.pi) - np.pi)
    return float(wrapped)


@dataclass(frozen=True, eq=False)
class BendConfig:
    """Two-parameter bending state gamma = psi * (-sin(phi), cos(phi))."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(2)
        g.flags.writeable = False
        object.__setattr__(self, "gamma", g)

    @classmethod
    def from_angles(cls, psi: float, phi: float) -> "BendConfig":
        """Build the canonical bend for bend angle psi and plane angle phi.

        Negative psi folds through (psi, phi) == (-psi, phi + pi); phi is
        wrapped to (-pi, pi]. psi = 0 maps to gamma = 0 exactly.
        """
        if psi < 0.0:
            psi, phi = -psi, phi + np.pi
        phi = wrap_angle(phi)
        if psi == 0.0:
            return cls(np.zeros(2))
        return cls(psi * np.array([-np.sin(phi), np.cos(phi)]))

    @property
    def psi(self) -> float:
        """Bend angle, the Euclidean norm of gamma."""
        return float(np.hypot(self.gamma[0], self.gamma[1]))

    @property
    def phi(self) -> float:
        """Bending-plane angle; 0 by convention when psi <= 1e-9."""
        if self.psi <= 1e-9:
            return 0.0
        return float(np.arctan2(-self.gamma[0], self.gamma[1]))

    def angles(self) -> tuple[float, float]:
        """Return (psi, phi)."""
        return self.psi, self.phi

    def __eq__(self, other) -> bool:
        if not isinstance(other, BendConfig):
            return NotImplemented
        return bool(np.array_equal(self.gamma, other.gamma))

    def __hash__(self) -> int:
        return hash((float(self.gamma[0]), float(self.gamma[1])))

    def __repr__(self) -> str:
        return f"BendConfig(gamma=[{self.gamma[0]!r}, {self.gamma[1]!r}])"


def bend_from_angles(psi: float, phi: float) -> BendConfig:
    """Canonical bend configuration for (psi, phi); see BendConfig.from_angles."""
    return BendConfig.from_angles(psi, phi)


def angles_from_bend(bend: BendConfig) -> tuple[float, float]:
    """Recover (psi, phi) from a bend configuration."""
    return bend.angles()


@dataclass(frozen=True)
class ChainSpec:
    """Ball count, ball diameter [m] and per-ball dipole magnitude [A m^2]."""

    n: int
    d: float
    mu: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"chain ball count must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.d > 0.0:
            raise ValueError(f"ball diameter must be positive, got {self.d}")
        if self.mu < 0.0 or not np.isfinite(self.mu):
            raise ValueError(f"dipole magnitude must be finite and >= 0, got {self.mu}")

    @property
    def total_length(self) -> float:
        """Chain length n*d in meters."""
        return self.n * self.d


def _check_rotation(rotation: np.ndarray, what: str) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (3, 3):
        raise ValueError(f"{what} must be a 3x3 matrix, got shape {rotation.shape}")
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ROTATION_TOL:
        raise ValueError(f"{what} is not orthonormal (tolerance {ROTATION_TOL})")
    if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
        raise ValueError(f"{what} must have determinant +1")
    return rotation


@dataclass(frozen=True, eq=False)
class FramePose:
    """Position [m] and orientation of a frame in the global frame."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        R = np.array(_check_rotation(self.rotation, "frame rotation"))
        p.flags.writeable = False
        R.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def identity(cls) -> "FramePose":
        return cls(np.zeros(3), np.eye(3))


@dataclass(frozen=True, eq=False)
class ChainState:
    """Ball positions [m] and dipole moment vectors [A m^2], proximal to tip."""

    positions: np.ndarray  # (n, 3)
    moments: np.ndarray  # (n, 3)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        mom = np.array(self.moments, dtype=float)
        if pos.shape != mom.shape or pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions and moments must both have shape (n, 3)")
        pos.flags.writeable = False
        mom.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "moments", mom)

    @property
    def tip(self) -> np.ndarray:
        return self.positions[-1]


def bend_twist_matrix(bend: BendConfig) -> np.ndarray:
    """Skew-symmetric (cross-product) matrix of (gamma_1, gamma_2, 0)."""
    g1, g2 = bend.gamma
    return np.array(
        [
            [0.0, 0.0, g2],
            [0.0, 0.0, -g1],
            [-g2, g1, 0.0],
        ]
    )


def _rodrigues_coeffs(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients a = sin(t)/t and b = (1-cos(t))/t^2, Taylor near t = 0."""
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    return a, b


def bend_rotation(bend: BendConfig, fraction: float = 1.0) -> np.ndarray:
    """Rotation exp([gamma]^ * fraction) in closed form (Rodrigues)."""
    w = np.array([bend.gamma[0], bend.gamma[1], 0.0]) * fraction
    theta = np.linalg.norm(w)
    W = np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )
    a, b = _rodrigues_coeffs(np.array(theta))
    return np.eye(3) + float(a) * W + float(b) * (W @ W)


def _tangent_columns(gammas: np.ndarray, n: int) -> np.ndarray:
    """Rotated base-frame link directions R(gamma, k/n) @ e3 for k = 1..n.

    gammas: (B, 2). Returns (B, n, 3). Uses the closed form
        R(w) e3 = e3 + a(t) * (w x e3) + b(t) * (w x (w x e3))
    with w = (g1, g2, 0) * k/n and t = |w|; w x e3 = (g2, -g1, 0) * k/n and
    w x (w x e3) = -psi^2 * (k/n)^2 * e3 since w is orthogonal to e3.
    """
    gammas = np.asarray(gammas, dtype=float).reshape(-1, 2)
    psi = np.hypot(gammas[:, 0], gammas[:, 1])  # (B,)
    frac = np.arange(1, n + 1) / n  # (n,)
    theta = psi[:, None] * frac[None, :]  # (B, n)
    a, b = _rodrigues_coeffs(theta)
    af = a * frac[None, :]
    bf = b * frac[None, :] ** 2
    cols = np.empty(gammas.shape[:1] + (n, 3))
    cols[:, :, 0] = af * gammas[:, 1, None]
    cols[:, :, 1] = -af * gammas[:, 0, None]
    cols[:, :, 2] = 1.0 - bf * (psi**2)[:, None]
    return cols


def chain_geometry_batch(
    spec: ChainSpec, base: FramePose, gammas: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Ball positions and moments for a batch of bend vectors.

    gammas: (B, 2). Returns (positions, moments), each (B, n, 3), in the
    global frame. Row b is bit-identical to evaluating gammas[b] alone.
    """
    cols = _tangent_columns(gammas, spec.n)  # (B, n, 3)
    steps = cols @ (spec.d * base.rotation.T)  # (B, n, 3) global-frame links
    positions = np.cumsum(steps, axis=1) + base.position
    moments = cols @ (spec.mu * base.rotation.T)
    return positions, moments


def chain_state(spec: ChainSpec, base: FramePose, bend: BendConfig) -> ChainState:
    """Ball positions and tangent dipole moments for one bend configuration."""
    positions, moments = chain_geometry_batch(spec, base, bend.gamma[None, :])
    return ChainState(positions[0], moments[0])


def tip_position(spec: ChainSpec, base: FramePose, bend: BendConfig) -> np.ndarray:
    """Global-frame position of the distal ball."""
    positions, _ = chain_geometry_batch(spec, base, bend.gamma[None, :])
    return positions[0, -1].copy()


def tip_positions_batch(spec: ChainSpec, base: FramePose, gammas: np.ndarray) -> np.ndarray:
    """Distal-ball positions for a batch of bend vectors; (B, 3)."""
    positions, _ = chain_geometry_batch(spec, base, gammas)
    return positions[:, -1, :]
