"""Classical mechanics of a linear mixed-species ion chain.

Equilibrium positions, axial normal modes and per-ion sideband coupling
strengths for a string of singly charged ions in a linear trap.  All ions
share the static axial well, so equal charges see equal spring constants
``k = m_ref * omega_z**2`` and the scaled equilibrium positions depend only
on the number of ions; the masses enter through the kinetic term and shape
the normal modes.

Internally everything is solved in scaled units: lengths in
``l = (e^2 / (4 pi eps0 m_ref omega_z^2))^(1/3)``, frequencies in units of
the reference ion's axial frequency ``omega_z``.  With
``dimensionless_mode=True`` results are reported in those units (and
``hbar = 1`` for ground-state amplitudes); otherwise frequencies come back
in rad/s and amplitudes in metres.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataError, UnstableCrystalError

HBAR = 1.054571817e-34  # J s
ATOMIC_MASS = 1.66053906660e-27  # kg
E_CHARGE = 1.602176634e-19  # C
EPSILON_0 = 8.8541878128e-12  # F/m

# Above this value the linear sideband-coupling model starts to break down.
LAMB_DICKE_THRESHOLD = 0.3


class LambDickeWarning(UserWarning):
    """Emitted when a coupling strength is requested outside the Lamb-Dicke
    regime (eta > 0.3), where the linear coupling model degrades."""


@dataclass(frozen=True)
class ChainConfig:
    """One physical ion chain.

    Parameters
    ----------
    masses : sequence of float
        Atomic masses in u, ordered by position along the chain axis.
    reference_index : int
        Index of the ion whose single-ion axial frequency is ``omega_z``.
    omega_z : float
        Angular axial trap frequency of the reference ion alone (rad/s).
        Ignored (treated as 1) when ``dimensionless_mode`` is set.
    k_projection : float
        Laser wavevector projection on the chain axis (1/m, or inverse
        scaled length units in dimensionless mode).
    dimensionless_mode : bool
        Report modes in scaled units (charge, reference mass and omega_z
        all equal to 1) instead of SI.
    """

    masses: tuple
    reference_index: int = 0
    omega_z: float = 1.0
    k_projection: float = 1.0
    dimensionless_mode: bool = True

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if len(self.masses) < 2:
            raise ValueError("a chain needs at least 2 ions")
        if any(m <= 0 for m in self.masses):
            raise ValueError("all masses must be positive")
        if not 0 <= self.reference_index < len(self.masses):
            raise ValueError("reference_index out of range")
        if self.omega_z <= 0:
            raise ValueError("omega_z must be positive")
        if self.k_projection < 0:
            raise ValueError("k_projection must be non-negative")

    @property
    def n_ions(self):
        return len(self.masses)

    def mass_ratios(self):
        """Masses in units of the reference ion's mass."""
        return np.asarray(self.masses) / self.masses[self.reference_index]


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium axial coordinates in scaled length units, ascending."""

    positions: np.ndarray
    residual_gradient_norm: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if np.any(np.diff(pos) <= 0):
            raise ValueError("equilibrium positions must be strictly increasing")

    @property
    def n_ions(self):
        return len(self.positions)


@dataclass(frozen=True)
class ModeSet:
    """Axial normal modes of one chain.

    ``eigenvectors[:, k]`` is the mass-weighted eigenvector of mode ``k``
    (orthonormal, sign-fixed so the component sum is positive), frequencies
    ascend, ``ground_state_amplitudes[i, k]`` is the zero-point amplitude
    z_i of ion i in mode k and ``lamb_dicke = k_projection * z``.
    """

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    ground_state_amplitudes: np.ndarray
    lamb_dicke: np.ndarray
    inphase_index: int
    dimensionless: bool = True

    def __post_init__(self):
        for name in ("frequencies", "eigenvectors", "ground_state_amplitudes",
                     "lamb_dicke"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_ions(self):
        return self.eigenvectors.shape[0]

    @property
    def n_modes(self):
        return self.eigenvectors.shape[1]


def scaled_potential(positions):
    """Scaled axial potential energy of the chain at the given coordinates.

    Trap term plus mutual Coulomb repulsion, in units of
    ``m_ref * omega_z^2 * l^2``.  Equal charges share the static well, so
    every ion sees the same unit spring constant here.
    """
    u = np.asarray(positions, dtype=float)
    d = u[:, None] - u[None, :]
    iu = np.triu_indices(len(u), k=1)
    return 0.5 * float(np.sum(u * u)) + float(np.sum(1.0 / np.abs(d[iu])))


def scaled_gradient(positions):
    """Gradient of :func:`scaled_potential` (analytic)."""
    u = np.asarray(positions, dtype=float)
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / (d * d), axis=1)


def scaled_hessian(positions):
    """Hessian of :func:`scaled_potential` (analytic)."""
    u = np.asarray(positions, dtype=float)
    n = len(u)
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    off = 2.0 / d**3
    h = -off
    h[np.diag_indices(n)] = 1.0 + np.sum(off, axis=1)
    return h


def solve_equilibrium(config, grad_tol=1e-12, max_iter=500):
    """Find the equilibrium positions of the chain.

    Damped Newton iteration on the scaled potential, seeded with uniform
    spacing.  The step is halved until it both preserves the ion ordering
    and decreases the gradient norm.

    Returns
    -------
    EquilibriumSolution
        Positions in scaled length units, strictly ascending.

    Raises
    ------
    ConvergenceError
        If the gradient norm is still above ``grad_tol`` after
        ``max_iter`` iterations.
    """
    n = config.n_ions
    u = (np.arange(n) - (n - 1) / 2.0) * 1.3
    gnorm = np.linalg.norm(scaled_gradient(u))
    for _ in range(max_iter):
        if gnorm < grad_tol:
            break
        g = scaled_gradient(u)
        step = np.linalg.solve(scaled_hessian(u), g)
        lam = 1.0
        while lam > 1e-14:
            trial = u - lam * step
            if np.all(np.diff(trial) > 0):
                trial_norm = np.linalg.norm(scaled_gradient(trial))
                if trial_norm < gnorm:
                    u, gnorm = trial, trial_norm
                    break
            lam *= 0.5
        else:
            break  # no productive step left; report whatever we reached
    if gnorm >= grad_tol:
        raise ConvergenceError(
            f"equilibrium solver stalled at gradient norm {gnorm:.3e} "
            f"(tolerance {grad_tol:.1e})",
            residual_norm=float(gnorm),
        )
    return EquilibriumSolution(positions=u, residual_gradient_norm=float(gnorm))


def _fix_eigenvector_signs(vectors):
    """Normalize eigenvector signs: component sum positive, falling back to
    the first significant component for sum-free (antisymmetric) modes."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        s = np.sum(out[:, k])
        if abs(s) < 1e-9:
            lead = out[np.argmax(np.abs(out[:, k]) > 1e-12), k]
            s = lead
        if s < 0:
            out[:, k] = -out[:, k]
    return out


def _find_inphase(vectors):
    """Index of the mode whose mass-weighted eigenvector has all components
    of one sign; lowest frequency wins if several qualify."""
    for k in range(vectors.shape[1]):
        b = vectors[:, k]
        if np.all(b > 1e-10) or np.all(b < -1e-10):
            return k
    return None


def solve_axial_modes(config, eq):
    """Axial normal modes about an equilibrium configuration.

    Diagonalizes the mass-weighted Hessian ``D = H_ij / sqrt(m_i m_j)``
    (masses in units of the reference mass).  Ground-state amplitudes are
    ``z_i = b_ik * sqrt(hbar / (2 m_i omega_k))`` with ``b`` the
    mass-weighted eigenvector; Lamb-Dicke parameters are
    ``eta_i = k_projection * z_i``.

    Raises
    ------
    UnstableCrystalError
        On a non-positive Hessian eigenvalue, or if no single-signed
        (in-phase) eigenvector exists.
    """
    if eq.n_ions != config.n_ions:
        raise ValueError("equilibrium size does not match config")
    mt = config.mass_ratios()
    h = scaled_hessian(eq.positions)
    d = h / np.sqrt(np.outer(mt, mt))
    evals, vecs = np.linalg.eigh(d)
    if evals[0] <= 0:
        raise UnstableCrystalError(
            f"non-positive mode curvature {evals[0]:.3e}; chain is not a "
            "stable linear crystal"
        )
    vecs = _fix_eigenvector_signs(vecs)
    inphase = _find_inphase(vecs)
    if inphase is None:
        raise UnstableCrystalError("no in-phase axial mode found")

    scaled_freqs = np.sqrt(evals)
    if config.dimensionless_mode:
        freqs = scaled_freqs
        # hbar = m_ref = omega_z = 1
        z = vecs / np.sqrt(2.0 * mt[:, None] * scaled_freqs[None, :])
    else:
        freqs = scaled_freqs * config.omega_z
        m_kg = np.asarray(config.masses) * ATOMIC_MASS
        z = vecs * np.sqrt(HBAR / (2.0 * m_kg[:, None] * freqs[None, :]))

    return ModeSet(
        frequencies=freqs,
        eigenvectors=vecs,
        ground_state_amplitudes=z,
        lamb_dicke=config.k_projection * z,
        inphase_index=int(inphase),
        dimensionless=config.dimensionless_mode,
    )


def coupling_strengths(modes, addressed, carrier_rate=1.0):
    """Red-sideband coupling strengths ``Omega_i = Omega_0 * eta_i`` for the
    addressed ions, taken on the in-phase mode, in chain order.

    ``carrier_rate`` is the carrier Rabi rate Omega_0.  Emits a
    :class:`LambDickeWarning` when an addressed eta exceeds 0.3 in SI mode
    (in scaled units eta is not a physical Lamb-Dicke parameter).
    """
    addressed = sorted(set(int(i) for i in addressed))
    if not addressed:
        raise ValueError("addressed ion set must not be empty")
    if addressed[0] < 0 or addressed[-1] >= modes.n_ions:
        raise ValueError("addressed ion index out of range")
    eta = modes.lamb_dicke[addressed, modes.inphase_index]
    if not modes.dimensionless and np.max(np.abs(eta)) > LAMB_DICKE_THRESHOLD:
        warnings.warn(
            f"max |eta| = {np.max(np.abs(eta)):.3f} exceeds "
            f"{LAMB_DICKE_THRESHOLD}; the linear sideband coupling model "
            "is unreliable here",
            LambDickeWarning,
            stacklevel=2,
        )
    return carrier_rate * eta


def length_scale(config):
    """Characteristic length l = (e^2/(4 pi eps0 m_ref omega_z^2))^(1/3) in
    metres (1.0 in dimensionless mode)."""
    if config.dimensionless_mode:
        return 1.0
    m_ref = config.masses[config.reference_index] * ATOMIC_MASS
    return (E_CHARGE**2 / (4 * np.pi * EPSILON_0 * m_ref * config.omega_z**2)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ChainTemplate:
    """A chain with one designated ancilla slot, parameterized by the
    ancilla-to-qubit mass ratio mu.

    ``base_masses`` lists the qubit masses with a placeholder at
    ``ancilla_index``; :meth:`config_for` replaces that slot with
    ``mu * m_reference``.
    """

    base_masses: tuple
    ancilla_index: int
    reference_index: int = 0
    omega_z: float = 1.0
    k_projection: float = 1.0
    dimensionless_mode: bool = True

    def __post_init__(self):
        object.__setattr__(self, "base_masses",
                           tuple(float(m) for m in self.base_masses))
        n = len(self.base_masses)
        if not 0 <= self.ancilla_index < n:
            raise ValueError("ancilla_index out of range")
        if not 0 <= self.reference_index < n:
            raise ValueError("reference_index out of range")
        if self.reference_index == self.ancilla_index:
            raise ValueError("the reference ion must be a qubit ion")

    @classmethod
    def symmetric(cls, n_qubits, placement="center", qubit_mass=1.0, **kwargs):
        """Equal-mass qubit chain with the ancilla at a standard slot.

        ``placement`` is ``"center"`` (for an odd qubit count the slot just
        below the midpoint), ``"edge"`` (last position), or an explicit
        integer slot.
        """
        if n_qubits < 1:
            raise ValueError("need at least one qubit ion")
        n = n_qubits + 1
        if placement == "center":
            slot = n_qubits // 2 if n_qubits % 2 == 0 else (n_qubits - 1) // 2
        elif placement == "edge":
            slot = n_qubits
        elif isinstance(placement, int):
            slot = placement
        else:
            raise ValueError(f"unknown placement {placement!r}")
        masses = [qubit_mass] * n
        reference = 0 if slot != 0 else 1
        return cls(base_masses=tuple(masses), ancilla_index=slot,
                   reference_index=reference, **kwargs)

    @property
    def n_qubits(self):
        return len(self.base_masses) - 1

    def addressed(self):
        """Indices of the qubit ions, in chain order."""
        return tuple(i for i in range(len(self.base_masses))
                     if i != self.ancilla_index)

    def config_for(self, mu):
        """ChainConfig with the ancilla mass set to ``mu`` times the
        reference (qubit) mass."""
        if mu <= 0:
            raise ValueError("mass ratio must be positive")
        masses = list(self.base_masses)
        masses[self.ancilla_index] = mu * masses[self.reference_index]
        return ChainConfig(
            masses=tuple(masses),
            reference_index=self.reference_index,
            omega_z=self.omega_z,
            k_projection=self.k_projection,
            dimensionless_mode=self.dimensionless_mode,
        )


# --- plain-text config files and CSV export ---------------------------------

_CHAIN_KEYS = {"masses", "reference_index", "omega_z", "k_projection",
               "ancilla_index"}


@dataclass(frozen=True)
class ChainFile:
    """Parsed chain config file: the ChainConfig plus the optional ancilla
    slot used by sweeps and the end-to-end experiment."""

    config: ChainConfig
    ancilla_index: int | None
    omega_z_hz: float


def read_chain_file(path):
    """Read a plain-text key/value chain description.

    Recognized keys: ``masses`` (comma-separated, u), ``omega_z`` (Hz),
    ``reference_index``, ``k_projection`` (1/m), ``ancilla_index``.
    ``#`` starts a comment.  The resulting config is in SI mode.
    """
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CHAIN_KEYS:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            if key in entries:
                raise DataError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = (lineno, value)

    def _parse(key, conv, default=None, required=False):
        if key not in entries:
            if required:
                raise DataError(f"{path}: missing required key {key!r}")
            return default
        lineno, value = entries[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc

    masses = _parse("masses",
                    lambda v: tuple(float(x) for x in v.replace(",", " ").split()),
                    required=True)
    if not masses:
        raise DataError(f"{path}: masses list is empty")
    omega_z_hz = _parse("omega_z", float, required=True)
    reference_index = _parse("reference_index", int, default=0)
    k_projection = _parse("k_projection", float, default=1.0)
    ancilla_index = _parse("ancilla_index", int, default=None)
    if ancilla_index is not None and not 0 <= ancilla_index < len(masses):
        raise DataError(f"{path}: ancilla_index out of range")

    try:
        config = ChainConfig(
            masses=masses,
            reference_index=reference_index,
            omega_z=2.0 * np.pi * omega_z_hz,
            k_projection=k_projection,
            dimensionless_mode=False,
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return ChainFile(config=config, ancilla_index=ancilla_index,
                     omega_z_hz=omega_z_hz)


def load_chain_config(path):
    """Shorthand for ``read_chain_file(path).config``."""
    return read_chain_file(path).config


MODES_CSV_SCHEMA = "modes.v1"


def modes_to_csv(modes, stream):
    """Write a mode table: one row per mode with its frequency, the in-phase
    marker, then per-ion ground-state amplitudes and Lamb-Dicke parameters.

    Frequencies are rad/s in SI mode and units of omega_z in dimensionless
    mode; amplitudes are metres resp. scaled lengths.
    """
    n = modes.n_ions
    stream.write(f"# {MODES_CSV_SCHEMA}\n")
    cols = ["mode", "frequency", "in_phase"]
    cols += [f"amp_{i}" for i in range(n)]
    cols += [f"eta_{i}" for i in range(n)]
    stream.write(",".join(cols) + "\n")
    for k in range(modes.n_modes):
        row = [str(k), repr(float(modes.frequencies[k])),
               "1" if k == modes.inphase_index else "0"]
        row += [repr(float(modes.ground_state_amplitudes[i, k])) for i in range(n)]
        row += [repr(float(modes.lamb_dicke[i, k])) for i in range(n)]
        stream.write(",".join(row) + "\n")
