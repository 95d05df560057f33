"""Per-image dictionary learning and sparse self-similar reconstruction.

A dictionary of unit-norm atoms is learned from the frame's own patches
(K-SVD), every patch is greedily sparse-coded (ORMP), and the denoised
image is the closed-form blend of the noisy pixels and the averaged patch
reconstructions. The residual (input minus raw reconstruction) carries the
non-self-similar structure downstream modules test for saliency.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit, prange
from scipy import ndimage

from .imaging import PatchMatrix, extract_patches, luminance, place_patches

_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

# Euclidean norm of the Laplacian stencil is sqrt(20); 0.6745 converts a
# median absolute deviation into a Gaussian standard deviation.
_MAD_TO_SIGMA = 0.6745 * np.sqrt(20.0)


@dataclass
class DenoiseParams:
    patch_side: int = 4
    dict_size: int = 64
    ormp_epsilon: float = 1e-6
    k_iter: int = 7
    lam: float | None = None  # defaults to 30 / sigma
    sigma: float | None = None  # estimated from the frame when absent
    max_atoms: int | None = None  # defaults to patch_dim // 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.patch_side < 2:
            raise ValueError("patch_side must be >= 2")
        if self.dict_size < 1 or self.k_iter < 1:
            raise ValueError("dict_size and k_iter must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")

    def with_seed(self, seed: int) -> "DenoiseParams":
        return replace(self, rng_seed=seed)

    def resolved_max_atoms(self, patch_dim: int) -> int:
        m = self.max_atoms if self.max_atoms is not None else max(1, patch_dim // 2)
        if not 1 <= m <= patch_dim:
            raise ValueError("max_atoms must lie in [1, patch_dim]")
        return m


@dataclass
class SparseCode:
    """Support and coefficients of one patch's sparse approximation."""

    indices: np.ndarray
    values: np.ndarray


@dataclass
class DenoiseResult:
    image: np.ndarray  # reconstruction clamped to [0, 255], display use
    raw: np.ndarray  # unclamped reconstruction; input - raw is the residual
    dictionary: np.ndarray
    coverage: np.ndarray | None = None  # patches covering each pixel (H, W)
    lam: float = 0.0  # resolved fidelity weight used in the blend


def estimate_sigma(img: np.ndarray) -> float:
    """Noise standard deviation from the MAD of the Laplacian-filtered luminance."""
    lap = ndimage.convolve(luminance(img), _LAPLACIAN, mode="reflect")
    mad = np.median(np.abs(lap - np.median(lap)))
    return float(mad / _MAD_TO_SIGMA)


def init_dictionary(patches: PatchMatrix | np.ndarray, k: int, seed: int) -> np.ndarray:
    """Seeded draw of k distinct patches, each normalized to unit norm.

    Near-zero patches (norm < 1e-12) are rejected and redrawn; running out
    of usable patches is an error.
    """
    cols = patches.columns if isinstance(patches, PatchMatrix) else patches
    n, count = cols.shape
    if count < k:
        raise ValueError(f"need at least {k} patches, got {count}")
    if k < n:
        warnings.warn(
            f"dictionary size {k} is below the patch dimension {n}; the "
            "learned dictionary will not be overcomplete",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(count)
    atoms = np.empty((n, k))
    got = 0
    for j in order:
        col = cols[:, j]
        nrm = np.linalg.norm(col)
        if nrm < 1e-12:
            continue
        atoms[:, got] = col / nrm
        got += 1
        if got == k:
            break
    if got < k:
        raise ValueError(f"only {got} usable (non-zero) patches for {k} atoms")
    return atoms


def _check_dictionary(dictionary: np.ndarray) -> None:
    norms = np.linalg.norm(dictionary, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise ValueError("dictionary columns must have unit norm")


@njit(cache=True, parallel=True)
def _ormp_batch(dt, gram, x_rows, eps2, max_atoms, out_idx, out_val, out_n):
    # dt: (k, n) transposed dictionary, gram: (k, k), x_rows: (P, n).
    # ORMP in the Gram domain: candidate scores are squared correlations
    # with the residual after projecting each atom against the selected
    # ones; the incremental Cholesky of the selected Gram block yields both
    # the scores and the final least-squares coefficients.
    n_patches = x_rows.shape[0]
    k = dt.shape[0]
    for p in prange(n_patches):
        x = x_rows[p]
        alpha0 = np.empty(k)
        for j in range(k):
            s = 0.0
            for q in range(x.shape[0]):
                s += dt[j, q] * x[q]
            alpha0[j] = s
        c = alpha0.copy()  # projected correlation numerators
        proj = np.ones(k)  # squared norms of projected atoms; -1 marks used
        z = np.empty((k, max_atoms))
        ldiag = np.empty(max_atoms)
        support = np.empty(max_atoms, dtype=np.int32)
        u = np.empty(max_atoms)
        energy = 0.0
        for q in range(x.shape[0]):
            energy += x[q] * x[q]
        m = 0
        while m < max_atoms and energy > eps2:
            best = -1
            best_score = 0.0
            for j in range(k):
                if proj[j] > 1e-12:
                    score = c[j] * c[j] / proj[j]
                    if score > best_score:
                        best_score = score
                        best = j
            if best < 0:
                break
            support[m] = best
            ldiag[m] = np.sqrt(proj[best])
            u[m] = c[best] / ldiag[m]
            energy -= u[m] * u[m]
            if energy < 0.0:
                energy = 0.0
            zb = z[best]
            for j in range(k):
                if proj[j] <= 1e-12 or j == best:
                    continue
                acc = gram[best, j]
                for t in range(m):
                    acc -= zb[t] * z[j, t]
                znew = acc / ldiag[m]
                z[j, m] = znew
                c[j] -= znew * u[m]
                proj[j] -= znew * znew
            proj[best] = -1.0
            m += 1
        # back-substitute L^T w = u for the least-squares coefficients
        for t in range(m - 1, -1, -1):
            acc = u[t]
            for q in range(t + 1, m):
                acc -= z[support[q], t] * out_val[p, q]
            out_val[p, t] = acc / ldiag[t]
        # one iterative-refinement step on the support normal equations;
        # near-collinear supports otherwise lose a few digits of accuracy
        rho = np.empty(max_atoms)
        y = np.empty(max_atoms)
        for t in range(m):
            acc = alpha0[support[t]]
            for q in range(m):
                acc -= gram[support[t], support[q]] * out_val[p, q]
            rho[t] = acc
        for t in range(m):
            acc = rho[t]
            for q in range(t):
                acc -= z[support[t], q] * y[q]
            y[t] = acc / ldiag[t]
        for t in range(m - 1, -1, -1):
            acc = y[t]
            for q in range(t + 1, m):
                acc -= z[support[q], t] * rho[q]
            rho[t] = acc / ldiag[t]
            out_val[p, t] += rho[t]
        for t in range(m):
            out_idx[p, t] = support[t]
        out_n[p] = m


def sparse_code(
    dictionary: np.ndarray, x_rows: np.ndarray, epsilon: float, max_atoms: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ORMP-code every row of x_rows (P, n) against the dictionary.

    Returns (indices (P, T), values (P, T), counts (P,)); only the first
    counts[p] slots of row p are meaningful.
    """
    n, k = dictionary.shape
    max_atoms = min(max_atoms, k)
    p = x_rows.shape[0]
    dt = np.ascontiguousarray(dictionary.T)
    gram = dt @ dictionary
    out_idx = np.zeros((p, max_atoms), dtype=np.int32)
    out_val = np.zeros((p, max_atoms))
    out_n = np.zeros(p, dtype=np.int32)
    _ormp_batch(dt, gram, np.ascontiguousarray(x_rows), epsilon * epsilon, max_atoms, out_idx, out_val, out_n)
    return out_idx, out_val, out_n


def _row_errors(x_rows, dictionary, idx, vals, counts):
    diff = reconstruct_rows(dictionary, idx, vals, counts) - x_rows
    return np.einsum("ij,ij->i", diff, diff)


def sparse_code_monotone(
    dictionary: np.ndarray,
    x_rows: np.ndarray,
    epsilon: float,
    max_atoms: int,
    prev: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ORMP-code every row, never worsening any patch's approximation.

    When prev holds the codes from the previous training round (still valid
    under the current dictionary), each patch keeps whichever of old/new
    codes reconstructs it better. Greedy pursuit alone can pick a worse
    support than the one the dictionary update just refined, which would
    let the training objective rise through the coding stage; this guard
    keeps the full {code, update} alternation non-increasing.
    """
    idx, vals, cnts = sparse_code(dictionary, x_rows, epsilon, max_atoms)
    if prev is not None:
        pidx, pvals, pcnts = prev
        new_err = _row_errors(x_rows, dictionary, idx, vals, cnts)
        old_err = _row_errors(x_rows, dictionary, pidx, pvals, pcnts)
        keep = old_err < new_err
        if keep.any():
            idx[keep] = pidx[keep]
            vals[keep] = pvals[keep]
            cnts[keep] = pcnts[keep]
    return idx, vals, cnts


def ormp(
    dictionary: np.ndarray, patch: np.ndarray, epsilon: float, max_atoms: int
) -> SparseCode:
    """Greedy sparse code of a single patch; see sparse_code for the batch path."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if np.isnan(patch).any():
        raise ValueError("patch contains NaN")
    _check_dictionary(dictionary)
    idx, val, cnt = sparse_code(dictionary, patch[None, :], epsilon, max_atoms)
    m = int(cnt[0])
    return SparseCode(indices=idx[0, :m].copy(), values=val[0, :m].copy())


def reconstruct_rows(
    dictionary: np.ndarray, idx: np.ndarray, vals: np.ndarray, counts: np.ndarray
) -> np.ndarray:
    """Dense patch reconstructions D @ alpha, one row per patch."""
    dt = dictionary.T
    recon = np.zeros((idx.shape[0], dictionary.shape[0]))
    for s in range(idx.shape[1]):
        live = counts > s
        if not live.any():
            break
        recon[live] += dt[idx[live, s]] * vals[live, s][:, None]
    return recon


def coding_error(
    x_rows: np.ndarray,
    dictionary: np.ndarray,
    idx: np.ndarray,
    vals: np.ndarray,
    counts: np.ndarray,
) -> float:
    """Total squared error sum ||D a_p - x_p||^2 over all patches."""
    diff = reconstruct_rows(dictionary, idx, vals, counts) - x_rows
    return float(np.einsum("ij,ij->", diff, diff))


def _rank1_update(err: np.ndarray, d0: np.ndarray, iters: int = 8, tol: float = 1e-9):
    """Dominant singular pair of err via power iteration warm-started at d0.

    Alternating g = E d, d = E^T g / ||.|| never increases ||E - g d^T||_F,
    so the surrounding K-SVD sweep stays monotone even when truncated.
    """
    d = d0
    prev = -1.0
    for _ in range(iters):
        g = err @ d
        u = err.T @ g
        nu = np.linalg.norm(u)
        if nu < 1e-30:
            return d0, np.zeros(err.shape[0])
        d = u / nu
        if abs(nu - prev) <= tol * nu:
            break
        prev = nu
    g = err @ d
    return d, g


def ksvd_iterate(
    x_rows: np.ndarray,
    dictionary: np.ndarray,
    idx: np.ndarray,
    vals: np.ndarray,
    counts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One K-SVD sweep: update every atom (and its coefficients) in index order.

    Atoms unused by every code are replaced with the normalized
    worst-represented patch (largest current residual, lowest index on
    ties); a patch consumed as a replacement counts as represented for the
    rest of the sweep. Returns (new_dictionary, new_values); vals is not
    mutated.
    """
    p, n = x_rows.shape
    if dictionary.shape[0] != n or idx.shape[0] != p:
        raise ValueError("dimension mismatch between patches, dictionary and codes")
    k = dictionary.shape[1]
    vals = vals.copy()
    resid = x_rows - reconstruct_rows(dictionary, idx, vals, counts)
    resid_norm = np.einsum("ij,ij->i", resid, resid)

    slot_mask = np.arange(idx.shape[1])[None, :] < counts[:, None]
    patch_ids, slot_ids = np.nonzero(slot_mask)
    atom_ids = idx[patch_ids, slot_ids]
    order = np.argsort(atom_ids, kind="stable")
    starts = np.searchsorted(atom_ids[order], np.arange(k + 1))

    new_dict = dictionary.copy()
    for l in range(k):
        sel = order[starts[l] : starts[l + 1]]
        if sel.size == 0:
            j = int(np.argmax(resid_norm))
            nrm = np.linalg.norm(x_rows[j])
            if nrm >= 1e-12:
                new_dict[:, l] = x_rows[j] / nrm
            resid_norm[j] = -1.0  # treated as represented within this sweep
            continue
        mp = patch_ids[sel]
        ms = slot_ids[sel]
        g = vals[mp, ms]
        err = resid[mp] + np.outer(g, new_dict[:, l])
        d, g_new = _rank1_update(err, new_dict[:, l])
        peak = int(np.argmax(np.abs(d)))
        if d[peak] < 0:  # deterministic sign convention
            d = -d
            g_new = -g_new
        new_dict[:, l] = d
        vals[mp, ms] = g_new
        rows = err - np.outer(g_new, d)
        resid[mp] = rows
        keep = resid_norm[mp] >= 0
        upd = np.einsum("ij,ij->i", rows, rows)
        resid_norm[mp] = np.where(keep, upd, resid_norm[mp])
    return new_dict, vals


def denoise(
    img: np.ndarray,
    params: DenoiseParams,
    dictionary: np.ndarray | None = None,
    stride: int = 1,
) -> DenoiseResult:
    """Learn (or reuse) a dictionary and rebuild the frame's self-similar part.

    The reconstruction is the closed-form blend (lam * y + patch sums) /
    (lam + coverage); `raw` keeps it unclamped so input - raw is exact.
    Strides above 1 trade reconstruction density for speed; every pixel must
    still be covered by at least one patch (guaranteed for stride <= side).
    """
    if stride > params.patch_side:
        raise ValueError("stride above the patch side leaves pixels uncovered")
    patches = extract_patches(img, params.patch_side, stride=stride)
    x_rows = np.ascontiguousarray(patches.columns.T)
    n = patches.patch_dim
    max_atoms = params.resolved_max_atoms(n)

    sigma = params.sigma if params.sigma is not None else estimate_sigma(img)
    lam = params.lam if params.lam is not None else 30.0 / max(sigma, 1e-6)

    if dictionary is None:
        dictionary = init_dictionary(patches, params.dict_size, params.rng_seed)
        codes = None
        for _ in range(params.k_iter):
            idx, vals, cnts = sparse_code_monotone(
                dictionary, x_rows, params.ormp_epsilon, max_atoms, codes
            )
            dictionary, vals = ksvd_iterate(x_rows, dictionary, idx, vals, cnts)
            codes = (idx, vals, cnts)
    else:
        _check_dictionary(dictionary)
        codes = None
    idx, vals, cnts = sparse_code_monotone(
        dictionary, x_rows, params.ormp_epsilon, max_atoms, codes
    )

    recon_rows = reconstruct_rows(dictionary, idx, vals, cnts)
    accum = lam * img.astype(np.float64)
    counts = np.full(img.shape[1:], lam, dtype=np.float64)
    place_patches(
        accum, counts, patches.origins, np.ascontiguousarray(recon_rows.T), params.patch_side
    )
    # counts can only vanish for lam == 0 at pixels a strided grid misses;
    # keep the input value there
    safe = np.maximum(counts, 1e-300)
    raw = np.where(counts > 0, accum / safe, img)
    return DenoiseResult(
        image=np.clip(raw, 0.0, 255.0),
        raw=raw,
        dictionary=dictionary,
        coverage=counts - lam,
        lam=lam,
    )


def equalize_residual_variance(
    res: np.ndarray, coverage: np.ndarray, lam: float
) -> np.ndarray:
    """Rescale a residual so its noise variance is position-independent.

    The blended reconstruction averages coverage-count patch estimates, so
    residual noise scales like sqrt(c) / (lam + c); border pixels (low
    coverage) are several times noisier than the interior, which otherwise
    shows up as spurious border saliency. Output is normalized so interior
    pixels are unchanged.
    """
    c = np.maximum(coverage, 1.0)
    factor = (lam + c) / np.sqrt(c)
    c_max = coverage.max()
    interior = (lam + c_max) / np.sqrt(max(c_max, 1.0))
    return res * (factor / interior)


def residual(input_img: np.ndarray, reconstruction: np.ndarray) -> np.ndarray:
    """Signed pixel-wise difference input - reconstruction, unclamped."""
    if input_img.shape != reconstruction.shape:
        raise ValueError(
            f"geometry mismatch: {input_img.shape} vs {reconstruction.shape}"
        )
    return input_img - reconstruction


def dump_dictionary(dictionary: np.ndarray, path) -> None:
    """Plain-text dictionary dump: one 'n k' header line, then matrix rows."""
    n, k = dictionary.shape
    with open(path, "w") as fh:
        fh.write(f"{n} {k}\n")
        np.savetxt(fh, dictionary, fmt="%.17g")


def load_dictionary(path) -> np.ndarray:
    with open(path) as fh:
        n, k = (int(v) for v in fh.readline().split())
        mat = np.loadtxt(fh)
    mat = mat.reshape(n, k)
    return mat
