"""Matching-pursuit sparse approximation over the geometric dictionary.

The scan over atom centers is exhaustive but computed with FFT correlation:
for each (generator, rotation, scales) combination a kernel is rendered once
on an enlarged grid and correlated with the residual, which yields the inner
product for every integer translation in one pass.  Atoms truncated by the
image boundary are renormalized, so the correlation result is divided by the
local norm of the truncated kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dictionary import (AtomParams, DictionarySpec, Generator, render_atom)


@dataclass
class SparseApprox:
    """K selected atoms with coefficients, in selection order."""

    atoms: list[AtomParams]
    coeffs: list[float]
    dims: tuple[int, int]
    residual_energy: float
    stopped_early: bool = False
    step_energies: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.atoms) != len(self.coeffs):
            raise ValueError("atoms and coeffs must have equal length")
        if len(self.atoms) < 1:
            raise ValueError("need at least one atom")
        if self.residual_energy < 0:
            raise ValueError("residual energy must be non-negative")


def _centered_kernel(spec: DictionarySpec, gen: Generator,
                     i_theta: int, i_sx: int, i_sy: int) -> np.ndarray:
    # Render on a (2*N1-1, 2*N2-1) grid so every in-image center sees the
    # full (untruncated) kernel during correlation.
    n1, n2 = spec.image_dims
    p = AtomParams(gen, float(n2 - 1), float(n1 - 1),
                   float(spec.rotations[i_theta]),
                   float(spec.scales_h[i_sx]), float(spec.scales_v[i_sy]))
    return render_atom(p, (2 * n1 - 1, 2 * n2 - 1))


def matching_pursuit(image: np.ndarray, spec: DictionarySpec,
                     n_atoms: int) -> SparseApprox:
    """Greedy matching pursuit: n_atoms steps of best-atom selection.

    Returns early with ``stopped_early`` set if the residual vanishes.
    Ties on |inner product| break toward the first combination in grid order.
    """
    if image.shape != tuple(spec.image_dims):
        raise ValueError("image dims do not match the dictionary spec")
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")

    kernels = []
    norm_maps = []
    for gen, it, ia, ib in spec.iter_shape_params():
        k = _centered_kernel(spec, gen, it, ia, ib)
        kernels.append((gen, it, ia, ib, k))
        # squared norm of the kernel truncated to the image window, per center
        sq = fftconvolve(np.ones(spec.image_dims), k[::-1, ::-1] ** 2, mode="same")
        norm_maps.append(np.sqrt(np.maximum(sq, 1e-300)))

    residual = image.astype(np.float64).copy()
    atoms: list[AtomParams] = []
    coeffs: list[float] = []
    step_energies = [float(np.sum(residual * residual))]
    stopped_early = False

    for _ in range(n_atoms):
        if step_energies[-1] <= 1e-300:
            stopped_early = True
            break
        best = None  # (abs_ip, combo_idx, row, col, signed_ip)
        for ci, (gen, it, ia, ib, k) in enumerate(kernels):
            # correlation of residual with every shifted copy of the kernel
            ip = fftconvolve(residual, k[::-1, ::-1], mode="same") / norm_maps[ci]
            aip = np.abs(ip)
            r, c = np.unravel_index(int(np.argmax(aip)), ip.shape)
            cand = (float(aip[r, c]), ci, int(r), int(c), float(ip[r, c]))
            if best is None or cand[0] > best[0] + 1e-12:
                best = cand
        _, ci, r, c, _ = best
        gen, it, ia, ib, _k = kernels[ci]
        p = spec.atom(gen, float(c), float(r), it, ia, ib)
        g = render_atom(p, spec.image_dims)
        # recompute the coefficient directly so residual orthogonality holds
        coef = float(np.vdot(g, residual))
        residual -= coef * g
        atoms.append(p)
        coeffs.append(coef)
        step_energies.append(float(np.sum(residual * residual)))

    if not atoms:
        raise ValueError("matching pursuit selected no atoms (zero image)")
    return SparseApprox(atoms, coeffs, tuple(spec.image_dims),
                        step_energies[-1], stopped_early, step_energies)


def reconstruct(a: SparseApprox) -> np.ndarray:
    out = np.zeros(a.dims, dtype=np.float64)
    for p, c in zip(a.atoms, a.coeffs):
        out += c * render_atom(p, a.dims)
    return out


def save_sidecar(a: SparseApprox, spec: DictionarySpec, path: str) -> None:
    """Write the approximation to a text sidecar, one atom per line."""
    lines = [f"# dims {a.dims[0]} {a.dims[1]}",
             f"# residual_energy {a.residual_energy!r}",
             f"# stopped_early {int(a.stopped_early)}"]
    for p, c in zip(a.atoms, a.coeffs):
        lines.append(" ".join([
            p.generator.value,
            repr(p.t_x), repr(p.t_y),
            str(spec.rotation_index(p.theta)),
            str(spec.sx_index(p.s_x)),
            str(spec.sy_index(p.s_y)),
            repr(c),
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sidecar(path: str, spec: DictionarySpec) -> SparseApprox:
    atoms: list[AtomParams] = []
    coeffs: list[float] = []
    dims = tuple(spec.image_dims)
    residual_energy = 0.0
    stopped_early = False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[0] == "dims":
                    dims = (int(parts[1]), int(parts[2]))
                elif parts[0] == "residual_energy":
                    residual_energy = float(parts[1])
                elif parts[0] == "stopped_early":
                    stopped_early = bool(int(parts[1]))
                continue
            gen_s, tx, ty, it, ia, ib, c = line.split()
            atoms.append(spec.atom(Generator(gen_s), float(tx), float(ty),
                                   int(it), int(ia), int(ib)))
            coeffs.append(float(c))
    return SparseApprox(atoms, coeffs, dims, residual_energy, stopped_early)
