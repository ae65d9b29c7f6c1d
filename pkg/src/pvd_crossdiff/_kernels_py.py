"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` operation for operation so both backends return
bitwise-comparable results up to floating-point reassociation.

Array layout for the finite-difference kernels is cell-major: a field is
``V[q, i]`` with ``Q`` rows and ``b = n + 1`` species columns.
"""
import numpy as np

BACKEND = "python"

# interior stencil variants
CORRECTED = 0
PRINTED = 1


def _diffusion_terms(V, K, variant):
    """Interior cross-diffusion bracket and its per-cell derivatives.

    Returns ``T`` (Q-2, b), ``dT_self`` (Q-2, b, b) and ``dT_nb`` (Q-2, b, b);
    the neighbour derivative is the same for the left and right cells.
    """
    Vc = V[1:-1]
    S = V[2:] + V[:-2]
    L = S - 2.0 * Vc
    KV = Vc @ K.T
    KL = L @ K.T
    b = V.shape[1]
    eye = np.eye(b)
    if variant == CORRECTED:
        T = KV * L - Vc * KL
        dT_self = (
            K[None, :, :] * L[:, :, None]
            + 2.0 * Vc[:, :, None] * K[None, :, :]
            - eye[None] * (2.0 * KV + KL)[:, :, None]
        )
    else:
        T = KV * S - 2.0 * ((Vc * Vc) @ K.T) - Vc * KL
        dT_self = (
            K[None, :, :] * S[:, :, None]
            - 4.0 * K[None, :, :] * Vc[:, None, :]
            + 2.0 * Vc[:, :, None] * K[None, :, :]
            - eye[None] * KL[:, :, None]
        )
    dT_nb = eye[None] * KV[:, :, None] - Vc[:, :, None] * K[None, :, :]
    return T, dT_self, dT_nb


def _boundary_terms(Vb, Vn, K):
    """Zero-flux style bracket ``sum_j K_ij [Vb_j (Vn_i - Vb_i) - Vb_i (Vn_j - Vb_j)]``."""
    G = Vn - Vb
    KVb = K @ Vb
    KG = K @ G
    B = KVb * G - Vb * KG
    dB_b = K * (G + Vb)[:, None] - np.diag(KVb + KG)
    dB_n = np.diag(KVb) - Vb[:, None] * K
    return B, dB_b, dB_n


def assemble(V, Vprev, K, e, ed, phi, y, dy, dt, variant=CORRECTED,
             inflow_sign=1.0, closure=True):
    """Residual and block-tridiagonal Jacobian of one implicit step.

    Returns ``(R, lower, diag, upper)`` where ``R`` has shape ``(Q, b)`` and
    each Jacobian band has shape ``(Q, b, b)``; ``lower[q]`` is the block
    ``dR_q / dV_{q-1}`` and ``upper[q]`` is ``dR_q / dV_{q+1}``.
    """
    Q, b = V.shape
    R = np.empty((Q, b))
    lower = np.zeros((Q, b, b))
    diag = np.zeros((Q, b, b))
    upper = np.zeros((Q, b, b))
    eye = np.eye(b)

    cdiff = 1.0 / (e * e * dy * dy)
    if variant == PRINTED:
        cdiff *= 0.5
    adv = (ed / e) * y[1:-1] / dy

    T, dT_self, dT_nb = _diffusion_terms(V, K, variant)
    Vc = V[1:-1]
    R[1:-1] = (Vc - Vprev[1:-1]) / dt - adv[:, None] * (V[2:] - Vc) - cdiff * T
    diag[1:-1] = eye[None] * (1.0 / dt + adv)[:, None, None] - cdiff * dT_self
    upper[1:-1] = -eye[None] * adv[:, None, None] - cdiff * dT_nb
    lower[1:-1] = -cdiff * dT_nb

    cb = 1.0 / (e * dy)
    B, dB_b, dB_n = _boundary_terms(V[0], V[1], K)
    R[0] = cb * B
    diag[0] = cb * dB_b
    upper[0] = cb * dB_n

    B, dB_b, dB_n = _boundary_terms(V[-1], V[-2], K)
    R[-1] = cb * B + inflow_sign * (ed * V[-1] - phi)
    diag[-1] = cb * dB_b + inflow_sign * ed * eye
    lower[-1] = cb * dB_n

    if closure:
        # boundary rows of all species sum to zero identically; pin sum(V) = 1
        for q in (0, Q - 1):
            R[q, 0] += V[q].sum() - 1.0
            diag[q, 0, :] += 1.0
    return R, lower, diag, upper


def parameter_derivatives(V, K, e, ed, y, dy, variant=CORRECTED, inflow_sign=1.0):
    """Partial derivatives of the residual with respect to ``e`` and ``ed``.

    The derivative with respect to ``phi_i`` is ``-inflow_sign`` on the last
    cell's row ``i`` and zero elsewhere.
    """
    Q, b = V.shape
    dRde = np.zeros((Q, b))
    dRded = np.zeros((Q, b))
    cdiff = 1.0 / (e * e * dy * dy)
    if variant == PRINTED:
        cdiff *= 0.5
    T, _, _ = _diffusion_terms(V, K, variant)
    grad = (V[2:] - V[1:-1]) * (y[1:-1] / dy)[:, None]
    dRde[1:-1] = (ed / (e * e)) * grad + (2.0 / e) * cdiff * T
    dRded[1:-1] = -grad / e
    for q, nb in ((0, 1), (Q - 1, Q - 2)):
        B, _, _ = _boundary_terms(V[q], V[nb], K)
        dRde[q] = -B / (e * e * dy)
    dRded[-1] = inflow_sign * V[-1]
    return dRde, dRded


def project(Vt):
    """Positive part then normalization per cell; returns ``(V, sums)``.

    ``sums`` holds the per-cell normalizers; a zero marks a degenerate cell.
    """
    P = np.maximum(Vt, 0.0)
    s = P.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        V = P / s[:, None]
    return V, s


# ---------------------------------------------------------------- lattice

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix_uniform(seed, counters):
    """Counter-based uniforms in [0, 1) from the splitmix64 finalizer."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def lattice_sweeps(sites, P, seed, counter0, nsweeps):
    """Advance ``sites`` (int64 array, modified in place) by ``nsweeps`` sweeps.

    A sweep makes ``2 (L - 1)`` sequential proposals.  Proposal ``j`` draws
    the bond ``k`` (joining sites ``k`` and ``k + 1``) from counter
    ``counter0 + 2 j`` and swaps the pair when the uniform at the next
    counter falls below ``P[left, right]``.  Returns the next free counter.
    """
    nb = sites.size - 1
    if nb < 1:
        return counter0
    attempts = 2 * int(nsweeps) * nb
    counter = counter0
    chunk = 1 << 16
    lab = sites.tolist()
    Pl = P.tolist()
    while attempts > 0:
        n = min(attempts, chunk)
        c = counter + 2 * np.arange(n, dtype=np.uint64)
        bonds = np.minimum((splitmix_uniform(seed, c) * nb).astype(np.int64), nb - 1)
        u = splitmix_uniform(seed, c + np.uint64(1))
        for k, x in zip(bonds.tolist(), u.tolist()):
            a = lab[k]
            b = lab[k + 1]
            if x < Pl[a][b]:
                lab[k] = b
                lab[k + 1] = a
        counter += 2 * n
        attempts -= n
    sites[:] = lab
    return counter
