"""SE(3)/se(3) algebra, product-of-exponentials kinematics, and a
Newton-Raphson inverse-kinematics solver built on the body Jacobian.

Conventions
-----------
* 6-vectors are ordered (angular, linear); screw axes and twists alike.
* ``RigidTransform`` composes with ``@``; ``a @ b`` applies ``b`` first.
* The convergence norm of a twist is ``max(|angular|, |linear|)`` so radians
  and meters are never summed.
* Rotation-vector magnitude is kept in [0, pi]; the pi branch extracts the
  axis from the largest diagonal element of the rotation matrix.

All functions are pure; arrays inside the value types are read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    JointLimitViolation,
    MaxIterationsExceeded,
    NonOrthogonalInput,
    SchemaError,
)

_SMALL_ANGLE = 1e-10


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RigidTransform:
    """An SE(3) element: 3x3 rotation plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation))
        object.__setattr__(self, "translation", _frozen(self.translation))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise DimensionMismatch(
                f"rigid transform needs 3x3 + 3, got {self.rotation.shape} "
                f"and {self.translation.shape}"
            )

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise DimensionMismatch(f"expected 4x4 matrix, got {m.shape}")
        return RigidTransform(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def orthogonality_defect(self) -> float:
        """Frobenius distance of R^T R from the identity."""
        return float(np.linalg.norm(self.rotation.T @ self.rotation - np.eye(3)))

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (
            self.orthogonality_defect() < tol
            and abs(np.linalg.det(self.rotation) - 1.0) < tol
            and bool(np.all(np.isfinite(self.translation)))
        )


@dataclass(frozen=True)
class BodyTwist:
    """se(3) element: (angular, linear), units depend on context
    (rad + m as a displacement, rad/s + m/s as a velocity)."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", _frozen(self.angular))
        object.__setattr__(self, "linear", _frozen(self.linear))
        if self.angular.shape != (3,) or self.linear.shape != (3,):
            raise DimensionMismatch("twist components must be 3-vectors")

    @staticmethod
    def zero() -> "BodyTwist":
        return BodyTwist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v) -> "BodyTwist":
        v = np.asarray(v, dtype=float)
        if v.shape != (6,):
            raise DimensionMismatch(f"expected 6-vector, got {v.shape}")
        return BodyTwist(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    def norm(self) -> float:
        """Convergence norm: max of the angular and linear 2-norms."""
        return max(float(np.linalg.norm(self.angular)), float(np.linalg.norm(self.linear)))


@dataclass(frozen=True)
class ScrewAxis:
    """A joint's unit screw: unit angular part (revolute) or zero angular
    part with unit linear part (prismatic)."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", _frozen(self.angular))
        object.__setattr__(self, "linear", _frozen(self.linear))
        wn = np.linalg.norm(self.angular)
        if abs(wn - 1.0) > 1e-12 and not (
            wn == 0.0 and abs(np.linalg.norm(self.linear) - 1.0) <= 1e-12
        ):
            raise SchemaError(
                "screw_axes",
                "angular part must be unit, or zero with a unit linear part",
            )

    @property
    def is_revolute(self) -> bool:
        return float(np.linalg.norm(self.angular)) > 0.5

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])


@dataclass(frozen=True)
class ChainDescription:
    """An open chain: body-frame screw axes, home (zero-joint) end-effector
    pose, and per-joint limits in radians."""

    screw_axes: tuple
    home_pose: RigidTransform
    joint_limits: np.ndarray  # (n, 2)

    def __post_init__(self):
        object.__setattr__(self, "screw_axes", tuple(self.screw_axes))
        object.__setattr__(self, "joint_limits", _frozen(self.joint_limits))
        n = len(self.screw_axes)
        if n < 1:
            raise SchemaError("screw_axes", "chain needs at least one joint")
        if self.joint_limits.shape != (n, 2):
            raise SchemaError("joint_limits_rad", f"expected shape ({n}, 2)")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise SchemaError("joint_limits_rad", "min must be < max for every joint")

    @property
    def n(self) -> int:
        return len(self.screw_axes)

    def axes_matrix(self) -> np.ndarray:
        """Screw axes stacked as an (n, 6) array."""
        return np.stack([s.as_vector() for s in self.screw_axes])

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.n:
            raise DimensionMismatch(f"chain has {self.n} joints, got {q.shape[0]} values")
        return q

    def within_limits(self, q) -> bool:
        q = self.check_q(q)
        return bool(
            np.all(q >= self.joint_limits[:, 0] - 1e-12)
            and np.all(q <= self.joint_limits[:, 1] + 1e-12)
        )

    @staticmethod
    def from_dict(data: dict) -> "ChainDescription":
        if data.get("format") != "wheelarm-chain/1":
            raise SchemaError("format", f"expected 'wheelarm-chain/1', got {data.get('format')!r}")
        try:
            axes = np.asarray(data["screw_axes"], dtype=float)
            home = np.asarray(data["home_pose"], dtype=float)
            limits = np.asarray(data["joint_limits_rad"], dtype=float)
        except (KeyError, ValueError) as exc:
            raise SchemaError("chain", f"missing or malformed key: {exc}") from exc
        if axes.ndim != 2 or axes.shape[1] != 6:
            raise SchemaError("screw_axes", f"expected n x 6, got {axes.shape}")
        screws = tuple(ScrewAxis(row[:3], row[3:]) for row in axes)
        return ChainDescription(screws, RigidTransform.from_matrix(home), limits)

    @staticmethod
    def from_file(path) -> "ChainDescription":
        with open(path) as f:
            return ChainDescription.from_dict(json.load(f))


def default_chain() -> ChainDescription:
    """The 7-DOF arm description shipped with the package."""
    from importlib import resources

    ref = resources.files("wheelarm").joinpath("data/gen3_chain.json")
    return ChainDescription.from_dict(json.loads(ref.read_text()))


@dataclass(frozen=True)
class IkResult:
    q: np.ndarray
    iterations: int
    residual: float


# --- so(3)/se(3) maps ---------------------------------------------------------

def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues rotation from a rotation vector (angle * unit axis)."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)


def so3_log(R, tol: float = 1e-6) -> np.ndarray:
    """Rotation vector of R, magnitude in [0, pi].

    Raises NonOrthogonalInput when R strays from SO(3) beyond ``tol``.

    The angle comes from atan2 of the antisymmetric-part norm against the
    trace, which keeps precision where arccos loses it. Past 120 degrees the
    axis is extracted from the symmetric part via the largest diagonal
    element (the antisymmetric part degrades as sin(theta) -> 0); at exactly
    pi the sign convention makes that largest-diagonal component positive.
    """
    R = np.asarray(R, dtype=float)
    defect = np.linalg.norm(R.T @ R - np.eye(3))
    if defect > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise NonOrthogonalInput(f"rotation defect {defect:.2e} exceeds {tol:.0e}")
    s_vec = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_theta = min(float(np.linalg.norm(s_vec)), 1.0)
    cos_theta = float(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0))
    theta = float(np.arctan2(sin_theta, cos_theta))
    if theta < _SMALL_ANGLE:
        return s_vec
    if cos_theta > -0.5:
        return (theta / sin_theta) * s_vec
    # near-pi branch: diagonal gives a_i^2, off-diagonal sums give products
    one_minus = 1.0 - cos_theta
    diag = np.diag(R)
    k = int(np.argmax(diag))
    axis = np.zeros(3)
    axis[k] = np.sqrt(max(0.0, (diag[k] - cos_theta) / one_minus))
    for j in range(3):
        if j != k:
            axis[j] = (R[k, j] + R[j, k]) / (2.0 * one_minus * axis[k])
    axis /= np.linalg.norm(axis)
    if s_vec[k] < 0.0:
        axis = -axis
    return theta * axis


def _v_matrix(w: np.ndarray) -> np.ndarray:
    """Integral of the rotation series; maps twist linear part to translation."""
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    return (
        np.eye(3)
        + ((1.0 - np.cos(theta)) / theta**2) * K
        + ((theta - np.sin(theta)) / theta**3) * (K @ K)
    )


def _v_inverse(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + (K @ K) / 12.0
    coeff = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * K + coeff * (K @ K)


def se3_exp(xi: BodyTwist) -> RigidTransform:
    """Exponential map: twist-as-displacement -> rigid transform.

    Exact for zero angular part (pure translation)."""
    w = xi.angular
    if float(np.linalg.norm(w)) == 0.0:
        return RigidTransform(np.eye(3), xi.linear)
    return RigidTransform(so3_exp(w), _v_matrix(w) @ xi.linear)


def se3_log(T: RigidTransform) -> BodyTwist:
    """Log map: rigid transform -> twist-as-displacement, angle in [0, pi]."""
    w = so3_log(T.rotation)
    if float(np.linalg.norm(w)) == 0.0:
        return BodyTwist(w, T.translation)
    return BodyTwist(w, _v_inverse(w) @ T.translation)


def adjoint(T: RigidTransform) -> np.ndarray:
    """6x6 adjoint of T acting on (angular, linear) twists."""
    A = np.zeros((6, 6))
    A[:3, :3] = T.rotation
    A[3:, 3:] = T.rotation
    A[3:, :3] = skew(T.translation) @ T.rotation
    return A


def quat_from_matrix(R) -> np.ndarray:
    """Unit quaternion (x, y, z, w) for a rotation matrix.

    Largest-pivot extraction; the pivot component is kept positive, which is
    locally continuous (no sign jumps along continuous rotation paths)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr >= max(R[0, 0], R[1, 1], R[2, 2]):
        w = 0.5 * np.sqrt(max(1.0 + tr, 0.0))
        s = 0.25 / w
        q = np.array([(R[2, 1] - R[1, 2]) * s, (R[0, 2] - R[2, 0]) * s,
                      (R[1, 0] - R[0, 1]) * s, w])
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        p = 0.5 * np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0))
        s = 0.25 / p
        q = np.zeros(4)
        q[i] = p
        q[j] = (R[j, i] + R[i, j]) * s
        q[k] = (R[k, i] + R[i, k]) * s
        q[3] = (R[k, j] - R[j, k]) * s
    return q / np.linalg.norm(q)


def matrix_from_quat(q) -> np.ndarray:
    """Rotation matrix for a unit quaternion (x, y, z, w)."""
    x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


# --- kinematics ----------------------------------------------------------------

def poe_fk(chain: ChainDescription, q) -> RigidTransform:
    """Body-form product of exponentials: T = M * prod_i exp([B_i] q_i)."""
    q = chain.check_q(q)
    T = chain.home_pose
    for axis, qi in zip(chain.screw_axes, q):
        T = T @ se3_exp(BodyTwist(axis.angular * qi, axis.linear * qi))
    return T


def body_jacobian(chain: ChainDescription, q) -> np.ndarray:
    """Body Jacobian (6 x n); column i maps dq_i to the body twist."""
    q = chain.check_q(q)
    n = chain.n
    J = np.zeros((6, n))
    A = RigidTransform.identity()
    for i in range(n - 1, -1, -1):
        axis = chain.screw_axes[i]
        J[:, i] = adjoint(A) @ axis.as_vector()
        A = A @ se3_exp(BodyTwist(axis.angular * (-q[i]), axis.linear * (-q[i])))
    return J


def pseudoinverse(J, damping: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse (damping 0, singular values below
    1e-8 * sigma_max zeroed) or damped least squares J^T (J J^T + l^2 I)^-1."""
    J = np.asarray(J, dtype=float)
    if damping == 0.0:
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        cutoff = 1e-8 * (s[0] if s.size else 0.0)
        s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
        return (Vt.T * s_inv) @ U.T
    m = J.shape[0]
    return J.T @ np.linalg.inv(J @ J.T + damping**2 * np.eye(m))


def wrap_to_pi(q) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    q = np.asarray(q, dtype=float)
    wrapped = np.remainder(q + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def ik_newton_raphson(
    chain: ChainDescription,
    target: RigidTransform,
    q0,
    tol: float = 1e-6,
    max_iter: int = 50,
    damping: float = 0.0,
    singular_threshold: float = 1e-6,
    fallback_damping: float = 1e-3,
) -> IkResult:
    """Iterate q <- q + pinv(J_b) * log(T(q)^-1 T_target) until the error
    twist norm drops below ``tol``.

    Near-singular Jacobians (smallest singular value below
    ``singular_threshold``) switch that update to damped least squares.
    The converged solution is wrapped to (-pi, pi] per revolute joint and
    checked against the chain limits.

    Raises MaxIterationsExceeded (with the final residual) or
    JointLimitViolation (so callers can re-seed).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    q = chain.check_q(q0).copy()

    def error_twist(qc):
        return se3_log(poe_fk(chain, qc).inverse() @ target)

    twist = error_twist(q)
    iterations = 0
    while twist.norm() >= tol:
        if iterations >= max_iter:
            raise MaxIterationsExceeded(
                f"no convergence after {max_iter} iterations "
                f"(residual {twist.norm():.3e})",
                residual=twist.norm(),
                iterations=iterations,
            )
        J = body_jacobian(chain, q)
        lam = damping
        if lam == 0.0 and np.linalg.svd(J, compute_uv=False)[-1] < singular_threshold:
            lam = fallback_damping
        q = q + pseudoinverse(J, lam) @ twist.as_vector()
        iterations += 1
        twist = error_twist(q)

    revolute = np.array([s.is_revolute for s in chain.screw_axes])
    q = np.where(revolute, wrap_to_pi(q), q)
    if not chain.within_limits(q):
        bad = np.nonzero(
            (q < chain.joint_limits[:, 0] - 1e-12) | (q > chain.joint_limits[:, 1] + 1e-12)
        )[0]
        raise JointLimitViolation(
            f"converged but joints {bad.tolist()} exceed limits", joints=bad.tolist()
        )
    return IkResult(q=q, iterations=iterations, residual=twist.norm())
