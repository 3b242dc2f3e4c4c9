"""Photon mode grids: momenta on energy shells, quadrature weights, polarization
frames, the UV cutoff function and the coupling form factors.

A photon wave function is stored as a complex array with one amplitude per
grid mode; continuum integrals ``sum_lambda int dk`` become ``sum_i w_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class ModeGrid:
    """Discrete photon modes.

    Attributes
    ----------
    dimension : spatial dimension ``d``.
    k : (M, d) momenta.
    polarization : (M,) polarization labels, 1-based.
    weights : (M,) positive quadrature weights.
    kappa : (M,) complex cutoff values.
    eps : (M, d) real unit polarization vectors.
    radius : (M,) shell radius of each mode, shared bit-for-bit within a shell.
    width : (M,) radial width of the mode's shell, when known.
    """

    dimension: int
    k: np.ndarray
    polarization: np.ndarray
    weights: np.ndarray
    kappa: np.ndarray
    eps: np.ndarray
    radius: np.ndarray
    width: np.ndarray | None = None

    def __post_init__(self):
        for name in ("k", "polarization", "weights", "kappa", "eps", "radius", "width"):
            if getattr(self, name) is None:
                continue
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    @property
    def n_polarizations(self) -> int:
        return 2 if self.dimension == 3 else 1

    @property
    def omega(self) -> np.ndarray:
        """Dispersion ``|k|`` per mode (the exact shell radius)."""
        return self.radius

    def shells(self) -> list[np.ndarray]:
        """Index arrays of modes sharing ``|k|``, ordered by radius."""
        return [np.flatnonzero(self.radius == r) for r in np.unique(self.radius)]

    def shell_pairs(self) -> list[tuple[int, int]]:
        """All ordered pairs ``(i, j)`` with ``|k_i| == |k_j|``."""
        return [(int(i), int(j)) for s in self.shells() for i in s for j in s]

    def inner(self, g, h) -> complex:
        """Discrete L2 inner product ``sum_i w_i conj(g_i) h_i``."""
        return complex(np.sum(self.weights * np.conj(g) * h))

    def check_photon_function(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=complex)
        if h.shape != (self.n_modes,):
            raise GridError(f"photon function needs {self.n_modes} amplitudes, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise GridError("photon function has non-finite amplitudes")
        return h

    def dump(self, path) -> None:
        """Plain-text table: d, k components, lambda, w, Re kappa, Im kappa."""
        with open(path, "w") as fh:
            cols = ["d"] + [f"k{a}" for a in range(self.dimension)] + ["lambda", "w", "re_kappa", "im_kappa"]
            fh.write("# " + " ".join(cols) + "\n")
            for i in range(self.n_modes):
                row = [str(self.dimension)] + [f"{x:.17g}" for x in self.k[i]]
                row += [str(int(self.polarization[i])), f"{self.weights[i]:.17g}",
                        f"{self.kappa[i].real:.17g}", f"{self.kappa[i].imag:.17g}"]
                fh.write(" ".join(row) + "\n")

    @classmethod
    def load(cls, path) -> "ModeGrid":
        data = np.loadtxt(path, ndmin=2)
        d = int(data[0, 0])
        k = data[:, 1:1 + d]
        lam = data[:, 1 + d].astype(int)
        w = data[:, 2 + d]
        kappa = data[:, 3 + d] + 1j * data[:, 4 + d]
        norms = np.linalg.norm(k, axis=1)
        radius = norms.copy()
        # snap radii that agree to rounding so shells stay exact after reload
        for i in range(len(radius)):
            close = np.isclose(norms, norms[i], rtol=1e-12, atol=0)
            radius[close] = radius[np.flatnonzero(close)[0]]
        eps = np.array([polarization_frame(k[i] / norms[i])[lam[i] - 1] for i in range(len(w))])
        return cls(d, k, lam, w, kappa, eps, radius)


def omega(k) -> float:
    """Photon dispersion ``|k|``."""
    return float(np.linalg.norm(np.asarray(k, dtype=float)))


def polarization_frame(n: np.ndarray) -> np.ndarray:
    """Polarization vectors for the unit direction ``n``.

    Returns a (P, d) array. In d=3 the rows together with ``n`` form a right
    handed orthonormal frame; in d=2 the single row is ``n`` rotated by 90
    degrees; in d=1 the scalar polarization is ``(1,)``.
    """
    n = np.asarray(n, dtype=float)
    d = n.size
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        return np.array([[-n[1], n[0]]])
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(n)))] = 1.0
    e1 = ref - np.dot(ref, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.array([e1, e2])


def shell_directions(d: int, count: int) -> np.ndarray:
    """Deterministic unit directions on the sphere S^{d-1}."""
    if d == 1:
        return np.array([[1.0], [-1.0]])[:count]
    if d == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if count == 6:
        return np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    if count == 2:
        return np.array([[0, 0, 1.0], [0, 0, -1.0]])
    # Fibonacci lattice
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5 ** 0.5) * i
    r = np.sqrt(1 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def cutoff(r, charge: float, lam: float, shape: str = "sharp"):
    """UV cutoff ``kappa(|k|)``: ``e 1_{|k|<Lambda}`` or a Gaussian of width Lambda."""
    if lam <= 0:
        raise GridError("cutoff Lambda must be positive")
    r = np.asarray(r, dtype=float)
    if shape == "sharp":
        return np.where(r < lam, complex(charge), 0j)
    if shape == "gaussian":
        return charge * np.exp(-(r ** 2) / (2 * lam ** 2)) + 0j
    raise GridError(f"unknown cutoff shape {shape!r}")


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _shell_widths(radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 1:
        return np.ones(1)
    order = np.argsort(radii)
    r = radii[order]
    mids = 0.5 * (r[1:] + r[:-1])
    edges = np.concatenate([[r[0] - (mids[0] - r[0])], mids, [r[-1] + (r[-1] - mids[-1])]])
    widths = np.empty_like(r)
    widths[order] = np.diff(edges)
    return widths


def make_grid(dimension, radii, directions=2, *, charge=0.1, cutoff_lambda=2.0,
              cutoff_shape="sharp", widths=None, momentum_floor=1e-3) -> ModeGrid:
    """Build a shell grid: for each radius, ``directions`` unit vectors times
    the polarization count. Weights are the shell measure split evenly."""
    if dimension not in (1, 2, 3):
        raise GridError("dimension must be 1, 2 or 3")
    radii = [float(r) for r in radii]
    bad = [r for r in radii if not r > momentum_floor]
    if bad:
        raise GridError(f"shell radii {bad} are not above the momentum floor {momentum_floor:g}")
    if cutoff_lambda <= 0:
        raise GridError("cutoff Lambda must be positive")
    if dimension == 1 and directions > 2:
        raise GridError("d=1 has at most two directions (+k, -k)")
    widths = _shell_widths(radii) if not widths else np.asarray(widths, dtype=float)
    if np.any(widths <= 0):
        raise GridError("shell widths must be positive")
    dirs = shell_directions(dimension, directions)
    ks, lams, ws, epss, rads, wids = [], [], [], [], [], []
    for r, width in zip(radii, widths):
        w = _sphere_area(dimension) * r ** (dimension - 1) * width / len(dirs)
        for n in dirs:
            frame = polarization_frame(n)
            for lam, e in enumerate(frame, start=1):
                ks.append(r * n)
                lams.append(lam)
                ws.append(w)
                epss.append(e)
                rads.append(r)
                wids.append(width)
    rads = np.array(rads)
    kappa = cutoff(rads, charge, cutoff_lambda, cutoff_shape)
    return ModeGrid(dimension, np.array(ks), np.array(lams), np.array(ws), kappa,
                    np.array(epss), rads, np.array(wids))


def build_grid(config) -> ModeGrid:
    """Mode grid described by a :class:`~pfscatter.config.RunConfig`."""
    m, d = config.model, config.discretization
    return make_grid(m.dimension, d.shells, d.directions, charge=m.charge,
                     cutoff_lambda=m.cutoff, cutoff_shape=m.cutoff_shape,
                     widths=d.shell_widths or None, momentum_floor=m.momentum_floor)


def omega_norm(h, grid: ModeGrid) -> float:
    """``(sum_i w_i |h_i|^2 (1 + 1/|k_i|))^{1/2}``."""
    h = np.asarray(h)
    return float(np.sqrt(np.sum(grid.weights * np.abs(h) ** 2 * (1 + 1 / grid.omega))))


def _phase(k, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.exp(-1j * (x @ np.asarray(k, dtype=float)))


def form_factor_g(x, k, eps, kappa) -> np.ndarray:
    """``G_x(k,lambda) = (2pi)^{-d/2} kappa |k|^{-1/2} eps e^{-ik.x}``.

    ``x`` may be a single point or an (n, d) array of points; the result has
    shape (n, d).
    """
    k = np.asarray(k, dtype=float)
    d = k.size
    pref = (2 * np.pi) ** (-d / 2) * kappa / np.sqrt(np.linalg.norm(k))
    return pref * _phase(k, x)[:, None] * np.asarray(eps, dtype=float)[None, :]


def form_factor_h(x, k, eps, kappa, spin_enabled=False) -> np.ndarray:
    """``H_x(k,lambda)``: as :func:`form_factor_g` with ``eps`` replaced by
    ``(-ik) x eps``. Zero for d<3, where spin coupling is unavailable."""
    k = np.asarray(k, dtype=float)
    d = k.size
    npts = np.atleast_2d(np.asarray(x, dtype=float)).shape[0]
    if d != 3:
        if spin_enabled:
            raise GridError("magnetic coupling requested with d != 3")
        return np.zeros((npts, d), dtype=complex)
    pref = (2 * np.pi) ** (-1.5) * kappa / np.sqrt(np.linalg.norm(k))
    curl = np.cross(-1j * k, np.asarray(eps, dtype=float))
    return pref * _phase(k, x)[:, None] * curl[None, :]


def grid_form_factor_g(grid: ModeGrid, x, i: int) -> np.ndarray:
    return form_factor_g(x, grid.k[i], grid.eps[i], grid.kappa[i])


def grid_form_factor_h(grid: ModeGrid, x, i: int, spin_enabled=False) -> np.ndarray:
    return form_factor_h(x, grid.k[i], grid.eps[i], grid.kappa[i], spin_enabled)
