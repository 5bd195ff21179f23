"""Two-qubit polarization states, waveplates and Born-rule statistics.

Basis ordering is {HH, HV, VH, VV}; the first factor is photon 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-12

PSI_PLUS = np.array([0.0, 1.0, 1.0, 0.0], dtype=complex) / math.sqrt(2.0)

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


class StateError(ValueError):
    pass


class CompensationError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise StateError(f"density matrix must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise StateError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > TRACE_TOL:
            raise StateError(f"trace {np.trace(rho).real} != 1")
        if np.min(np.linalg.eigvalsh(rho)) < -PSD_TOL:
            raise StateError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, psi) -> "TwoQubitState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class SourceParams:
    pair_rate: float = 5.9e6  # pairs/s
    target_fidelity: float = 0.907
    onboard_sampling_fraction_per_arm: float = 0.01

    def __post_init__(self):
        if self.pair_rate <= 0:
            raise StateError("pair_rate must be positive")
        if not 0.25 <= self.target_fidelity <= 1.0:
            raise StateError("target_fidelity must lie in [0.25, 1]")


@dataclass(frozen=True)
class WaveplateSetting:
    qwp1_angle: float
    hwp_angle: float
    qwp2_angle: float

    def __post_init__(self):
        for name in ("qwp1_angle", "hwp_angle", "qwp2_angle"):
            if not 0.0 <= getattr(self, name) < math.pi:
                raise ValueError(f"{name} must lie in [0, pi)")


@dataclass(frozen=True)
class AnalyzerSetting:
    """Projective analyzer: "+" is cos(a)|H> + sin(a)|V>, "-" its complement."""

    angle: float
    handedness_sign: int = 1

    def __post_init__(self):
        if not 0.0 <= self.angle < math.pi:
            raise ValueError("analyzer angle must lie in [0, pi)")
        if self.handedness_sign not in (1, -1):
            raise ValueError("handedness_sign must be +1 or -1")


def psi_plus() -> TwoQubitState:
    return TwoQubitState.pure(PSI_PLUS)


def make_werner(fidelity: float) -> TwoQubitState:
    """Isotropic mixture of |psi+> with white noise at the given fidelity."""
    if not 0.25 <= fidelity <= 1.0:
        raise StateError(f"fidelity {fidelity} outside [0.25, 1]")
    p = (4.0 * fidelity - 1.0) / 3.0
    rho = p * np.outer(PSI_PLUS, PSI_PLUS.conj()) + (1.0 - p) * np.eye(4) / 4.0
    return TwoQubitState(rho)


def make_colored(fidelity: float) -> TwoQubitState:
    """|psi+> mixed with its dephased counterpart (|HV><HV| + |VH><VH|)/2.

    Same fidelity as :func:`make_werner` but with noise confined to the
    anticorrelated populations; fidelity must be >= 0.5.
    """
    if not 0.5 <= fidelity <= 1.0:
        raise StateError(f"fidelity {fidelity} outside [0.5, 1] for colored noise")
    p = 2.0 * fidelity - 1.0
    noise = np.diag([0.0, 0.5, 0.5, 0.0]).astype(complex)
    return TwoQubitState(p * np.outer(PSI_PLUS, PSI_PLUS.conj()) + (1.0 - p) * noise)


def exact_fidelity(state: TwoQubitState, target=PSI_PLUS) -> float:
    target = np.asarray(target, dtype=complex)
    return float(np.real(target.conj() @ state.rho @ target))


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return u.shape == (2, 2) and np.max(np.abs(u.conj().T @ u - I2)) <= tol


def apply_local_unitaries(state: TwoQubitState, u1, u2) -> TwoQubitState:
    if not (is_unitary(u1) and is_unitary(u2)):
        raise StateError("local operators must be unitary")
    u = np.kron(np.asarray(u1, dtype=complex), np.asarray(u2, dtype=complex))
    rho = u @ state.rho @ u.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return TwoQubitState(rho / np.trace(rho).real)


def dephase(state: TwoQubitState, coherence: float) -> TwoQubitState:
    """Scale the HV/VH coherences on both arms' H/V basis by ``coherence``.

    Off-diagonal terms with one qubit flipped are multiplied by
    ``coherence``, with both flipped by ``coherence**2``.
    """
    if not 0.0 <= coherence <= 1.0:
        raise StateError("coherence must lie in [0, 1]")
    flips = np.array([[0, 1, 1, 2], [1, 0, 2, 1], [1, 2, 0, 1], [2, 1, 1, 0]])
    return TwoQubitState(state.rho * coherence**flips)


def rotation(angle: float) -> np.ndarray:
    """Real rotation of linear polarization by ``angle`` (H -> cos|H> + sin|V>)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def retarder(fast_axis: float, retardance: float) -> np.ndarray:
    """Jones matrix of a linear retarder, fast axis at ``fast_axis`` from H."""
    r = rotation(fast_axis)
    core = np.diag([1.0, np.exp(1j * retardance)])
    return r @ core @ r.conj().T


def _qhq(q1: float, h: float, q2: float) -> np.ndarray:
    return retarder(q2, math.pi / 2) @ retarder(h, math.pi) @ retarder(q1, math.pi / 2)


def waveplate_unitary(setting: WaveplateSetting) -> np.ndarray:
    """QWP(q2) . HWP(h) . QWP(q1); light meets qwp1 first."""
    return _qhq(setting.qwp1_angle, setting.hwp_angle, setting.qwp2_angle)


def phase_distance(u, v=I2) -> float:
    """Frobenius distance between u and v minimised over a global phase."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    overlap = np.trace(v.conj().T @ u)
    val = np.sum(np.abs(u) ** 2) + np.sum(np.abs(v) ** 2) - 2.0 * abs(overlap)
    return math.sqrt(max(val, 0.0))


def _wrap(angle: float) -> float:
    a = float(angle) % math.pi
    return 0.0 if a >= math.pi else a


COMPENSATION_TOL = 1e-6
MAX_STARTS = 64


def solve_compensation(channel, tol: float = COMPENSATION_TOL, max_starts: int = MAX_STARTS) -> WaveplateSetting:
    """Waveplate angles that undo ``channel`` up to a global phase.

    Minimises ``|W(q1,h,q2) . channel - exp(i phi) I|`` with Levenberg-Marquardt
    from a fixed sequence of starting points; gives up after ``max_starts``.
    """
    channel = np.asarray(channel, dtype=complex)
    if not is_unitary(channel, 1e-9):
        raise StateError("channel is not unitary")

    def residuals(x):
        m = _qhq(*x[:3]) @ channel - np.exp(1j * x[3]) * I2
        return np.concatenate([m.real.ravel(), m.imag.ravel()])

    starts = np.random.default_rng(0).uniform(0.0, math.pi, size=(max_starts, 3))
    starts[0] = 0.0
    best = float("inf")
    for x0 in starts:
        w0 = _qhq(*x0) @ channel
        phi0 = np.angle(np.trace(w0))
        fit = least_squares(residuals, np.append(x0, phi0), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        setting = WaveplateSetting(*(_wrap(a) for a in fit.x[:3]))
        res = phase_distance(waveplate_unitary(setting) @ channel)
        best = min(best, res)
        if res <= tol:
            return setting
    raise CompensationError(f"no setting found in {max_starts} starts", best)


def residual_from_contrast(contrast: float) -> float:
    """Residual rotation angle whose single-arm extinction is ``1:contrast``."""
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    if math.isinf(contrast):
        return 0.0
    return math.atan(1.0 / math.sqrt(contrast))


def coherence_from_contrast(contrast: float) -> float:
    """Dephasing-like reading of a contrast: coherence factor (C-1)/(C+1)."""
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    if math.isinf(contrast):
        return 1.0
    return (contrast - 1.0) / (contrast + 1.0)


def _analyzer_vectors(angle: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c, s], dtype=complex), np.array([-s, c], dtype=complex)


def measurement_probabilities(state: TwoQubitState, a: AnalyzerSetting, b: AnalyzerSetting) -> np.ndarray:
    """Joint outcome probabilities ``[P++, P+-, P-+, P--]``.

    Each analyzer's angle is multiplied by its ``handedness_sign`` before use.
    """
    pa, ma = _analyzer_vectors(a.handedness_sign * a.angle)
    pb, mb = _analyzer_vectors(b.handedness_sign * b.angle)
    probs = np.empty(4)
    for k, (u, v) in enumerate(((pa, pb), (pa, mb), (ma, pb), (ma, mb))):
        vec = np.kron(u, v)
        probs[k] = np.real(vec.conj() @ state.rho @ vec)
    probs = np.clip(probs, 0.0, 1.0)
    return probs / probs.sum()


def correlator(probs: Sequence[float]) -> float:
    p = np.asarray(probs, dtype=float)
    return float(p[0] + p[3] - p[1] - p[2])


CHSH_ANGLES = ((0.0, math.pi / 8), (0.0, 3 * math.pi / 8), (math.pi / 4, math.pi / 8), (math.pi / 4, 3 * math.pi / 8))
CHSH_SIGNS = (1.0, -1.0, 1.0, 1.0)


def ideal_chsh(state: TwoQubitState, handedness_sign: int, angles=CHSH_ANGLES) -> float:
    es = [
        correlator(measurement_probabilities(state, AnalyzerSetting(a1), AnalyzerSetting(a2, handedness_sign)))
        for a1, a2 in angles
    ]
    return abs(sum(sgn * e for sgn, e in zip(CHSH_SIGNS, es)))


def calibrate_handedness(state: TwoQubitState | None = None, angles=CHSH_ANGLES) -> int:
    """Analyzer-2 handedness sign that maximises S for ``state`` (default |psi+>)."""
    state = psi_plus() if state is None else state
    return max((1, -1), key=lambda s: ideal_chsh(state, s, angles))


def onboard_sampling_rate(source: SourceParams) -> float:
    """Coincidence rate seen by the on-board monitor tapping each arm."""
    f = source.onboard_sampling_fraction_per_arm
    if not 0.0 < f <= 1.0:
        raise ValueError("sampling fraction must lie in (0, 1]")
    return source.pair_rate * f * f
