"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` loop (``_nb_*``) and a vectorised
numpy version (``_np_*``). The public names bind to one of them according to
:data:`qenigma._backend.BACKEND`. Both paths take identical, pre-drawn random
variates so they agree up to floating-point rounding; the tests check that.

Array conventions
-----------------
``psi``      (d, S) complex, column ``s`` is the locked state ``U_k|j>``.
``phi``      (d,) complex probe state.
``bloch``    (..., 3) real Bloch vectors of qubit states.
``unitaries`` (K, d, d) complex, one per key.

Outcome codes used by :func:`resend_batch`: ``0`` photon in a mode,
``1`` no photon, ``2`` multi-photon, ``-1`` round not played.
"""
import math

import numpy as np

from ._backend import BACKEND, njit, prange

INV_LN2 = 1.0 / math.log(2.0)
# objective differences below this fraction of |f| are rounding noise
_NOISE = 64 * np.finfo(np.float64).eps
_QUIET_STEPS = 8

OUTCOME_PHOTON = 0
OUTCOME_NO_PHOTON = 1
OUTCOME_MULTI = 2
OUTCOME_UNUSED = -1


# ---------------------------------------------------------------------------
# probe objective  sum_s p_s log2 p_s,  p_s = |<psi_s|phi>|^2
# ---------------------------------------------------------------------------

def _np_plogp(p):
    out = np.zeros_like(p)
    pos = p > 0.0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def _np_objective(psi, phi):
    a = psi.conj().T @ phi
    p = a.real ** 2 + a.imag ** 2
    return float(_np_plogp(p).sum())


def _np_objective_and_grad(psi, phi):
    a = psi.conj().T @ phi
    p = a.real ** 2 + a.imag ** 2
    pos = p > 0.0
    w = np.zeros_like(p)
    w[pos] = np.log2(p[pos]) + INV_LN2
    f = float((p[pos] * np.log2(p[pos])).sum())
    return f, psi @ (w * a)


@njit(cache=True, nogil=True)
def _nb_objective(psi, phi):
    d, S = psi.shape
    f = 0.0
    for s in range(S):
        re = 0.0
        im = 0.0
        for i in range(d):
            c = psi[i, s]
            x = phi[i]
            # conj(c) * x
            re += c.real * x.real + c.imag * x.imag
            im += c.real * x.imag - c.imag * x.real
        p = re * re + im * im
        if p > 0.0:
            f += p * math.log2(p)
    return f


@njit(cache=True, nogil=True)
def _nb_objective_and_grad(psi, phi):
    d, S = psi.shape
    f = 0.0
    g = np.zeros(d, dtype=np.complex128)
    for s in range(S):
        a = 0.0 + 0.0j
        for i in range(d):
            a += psi[i, s].conjugate() * phi[i]
        p = a.real * a.real + a.imag * a.imag
        if p > 0.0:
            lp = math.log2(p)
            f += p * lp
            wa = (lp + INV_LN2) * a
            for i in range(d):
                g[i] += wa * psi[i, s]
    return f, g


def _np_batch_objective(psi, phis):
    out = np.empty(phis.shape[0])
    step = max(1, 2 ** 22 // max(1, psi.shape[1]))
    for lo in range(0, phis.shape[0], step):
        a = phis[lo:lo + step] @ psi.conj()
        p = a.real ** 2 + a.imag ** 2
        out[lo:lo + step] = _np_plogp(p).sum(axis=1)
    return out


@njit(cache=True, nogil=True)
def _nb_batch_objective(psi, phis):
    G = phis.shape[0]
    S = psi.shape[1]
    conj = np.ascontiguousarray(psi.conj())
    out = np.empty(G)
    # the inner products go through BLAS, in blocks that bound the scratch size
    step = max(1, 2 ** 22 // max(1, S))
    for lo in range(0, G, step):
        hi = min(G, lo + step)
        a = np.ascontiguousarray(phis[lo:hi]) @ conj
        for g in range(hi - lo):
            f = 0.0
            for s in range(S):
                p = a[g, s].real * a[g, s].real + a[g, s].imag * a[g, s].imag
                if p > 0.0:
                    f += p * math.log2(p)
            out[lo + g] = f
    return out


def _np_bloch_grid_objective(bloch, dirs):
    out = np.empty(dirs.shape[0])
    step = max(1, 2 ** 22 // max(1, bloch.shape[0]))
    for lo in range(0, dirs.shape[0], step):
        p = 0.5 * (1.0 + dirs[lo:lo + step] @ bloch.T)
        np.clip(p, 0.0, 1.0, out=p)
        out[lo:lo + step] = _np_plogp(p).sum(axis=1)
    return out


@njit(cache=True, nogil=True, parallel=True)
def _nb_bloch_grid_objective(bloch, dirs):
    G = dirs.shape[0]
    S = bloch.shape[0]
    out = np.empty(G)
    for g in prange(G):
        acc = 0.0
        for s in range(S):
            p = 0.5 * (1.0 + dirs[g, 0] * bloch[s, 0] + dirs[g, 1] * bloch[s, 1]
                       + dirs[g, 2] * bloch[s, 2])
            if p > 1.0:
                p = 1.0
            if p > 0.0:
                acc += p * math.log2(p)
        out[g] = acc
    return out


# ---------------------------------------------------------------------------
# projected gradient ascent on the unit sphere
#
# Stops when the tangent gradient norm drops below max(tol, sqrt(floor)),
# floor being the rounding noise of f, or when the line search finds no
# ascent resolvable above that noise. Both count as converged: the point is
# stationary to working precision. Only hitting max_iter reports failure.
# ---------------------------------------------------------------------------

def _np_ascent(psi, phi0, max_iter, tol, armijo, step_max):
    phi = phi0 / np.linalg.norm(phi0)
    f, g = _np_objective_and_grad(psi, phi)
    t = 1.0
    converged = False
    it = 0
    quiet = 0
    while it < max_iter:
        grad = 2.0 * g
        tangent = grad - np.vdot(phi, grad) * phi
        gn2 = float(np.vdot(tangent, tangent).real)
        floor = _NOISE * (abs(f) + 1.0)
        if math.sqrt(gn2) < max(tol, math.sqrt(floor)):
            converged = True
            break
        t = min(2.0 * t, step_max)
        accepted = False
        while t > 1e-16:
            cand = phi + t * tangent
            cand = cand / np.linalg.norm(cand)
            fc, gc = _np_objective_and_grad(psi, cand)
            if fc >= f + armijo * t * gn2:
                accepted = True
                quiet = 0
            elif armijo * t * gn2 <= floor and fc >= f:
                # sufficient increase is below rounding; still ascending at cand
                accepted = np.vdot(tangent, gc).real >= 0.0
                quiet += 1
            if accepted:
                break
            t *= 0.5
        if not accepted or quiet >= _QUIET_STEPS:
            # no resolvable ascent left along the gradient
            converged = True
            if accepted:
                phi, f = cand, fc
                it += 1
            break
        phi = cand
        f, g = fc, gc
        it += 1
    return phi, f, it, converged


@njit(cache=True, nogil=True)
def _nb_ascent(psi, phi0, max_iter, tol, armijo, step_max):
    d = phi0.shape[0]
    phi = phi0 / np.sqrt(np.sum(np.abs(phi0) ** 2))
    f, g = _nb_objective_and_grad(psi, phi)
    t = 1.0
    converged = False
    it = 0
    quiet = 0
    tangent = np.empty(d, dtype=np.complex128)
    cand = np.empty(d, dtype=np.complex128)
    while it < max_iter:
        proj = 0.0 + 0.0j
        for i in range(d):
            proj += phi[i].conjugate() * (2.0 * g[i])
        gn2 = 0.0
        for i in range(d):
            tangent[i] = 2.0 * g[i] - proj * phi[i]
            gn2 += tangent[i].real ** 2 + tangent[i].imag ** 2
        floor = _NOISE * (abs(f) + 1.0)
        if math.sqrt(gn2) < max(tol, math.sqrt(floor)):
            converged = True
            break
        t = min(2.0 * t, step_max)
        accepted = False
        while t > 1e-16:
            nrm = 0.0
            for i in range(d):
                cand[i] = phi[i] + t * tangent[i]
                nrm += cand[i].real ** 2 + cand[i].imag ** 2
            nrm = math.sqrt(nrm)
            for i in range(d):
                cand[i] = cand[i] / nrm
            fc, gc = _nb_objective_and_grad(psi, cand)
            if fc >= f + armijo * t * gn2:
                accepted = True
                quiet = 0
            elif armijo * t * gn2 <= floor and fc >= f:
                slope = 0.0
                for i in range(d):
                    slope += tangent[i].real * gc[i].real + tangent[i].imag * gc[i].imag
                accepted = slope >= 0.0
                quiet += 1
            if accepted:
                break
            t *= 0.5
        if not accepted or quiet >= _QUIET_STEPS:
            converged = True
            if accepted:
                phi = cand.copy()
                f = fc
                it += 1
            break
        phi = cand.copy()
        f = fc
        g = gc
        it += 1
    return phi, f, it, converged


# ---------------------------------------------------------------------------
# brute-force mutual information over two-outcome projective measurements
# ---------------------------------------------------------------------------

def _np_h2(p):
    q = 1.0 - p
    return -(_np_plogp(p) + _np_plogp(q))


def _np_mutual_info_grid(bloch, dirs, joint):
    K, J, _ = bloch.shape
    flat = bloch.reshape(K * J, 3)
    out = np.empty(dirs.shape[0])
    step = max(1, 2 ** 22 // (K * J))
    for lo in range(0, dirs.shape[0], step):
        p = 0.5 * (1.0 + dirs[lo:lo + step] @ flat.T)
        np.clip(p, 0.0, 1.0, out=p)
        p = p.reshape(-1, K, J)
        h_out = _np_h2(p.mean(axis=(1, 2)))
        if joint:
            h_cond = _np_h2(p).mean(axis=(1, 2))
        else:
            h_cond = _np_h2(p.mean(axis=1)).mean(axis=1)
        out[lo:lo + step] = h_out - h_cond
    return out


@njit(cache=True, nogil=True)
def _nb_h2(p):
    acc = 0.0
    if p > 0.0:
        acc -= p * math.log2(p)
    q = 1.0 - p
    if q > 0.0:
        acc -= q * math.log2(q)
    return acc


@njit(cache=True, nogil=True, parallel=True)
def _nb_mutual_info_grid(bloch, dirs, joint):
    K, J, _ = bloch.shape
    G = dirs.shape[0]
    out = np.empty(G)
    for g in prange(G):
        total = 0.0
        cond = 0.0
        for j in range(J):
            pj = 0.0
            for k in range(K):
                p = 0.5 * (1.0 + dirs[g, 0] * bloch[k, j, 0] + dirs[g, 1] * bloch[k, j, 1]
                           + dirs[g, 2] * bloch[k, j, 2])
                p = min(max(p, 0.0), 1.0)
                pj += p
                if joint:
                    cond += _nb_h2(p)
            total += pj
            if not joint:
                cond += _nb_h2(pj / K)
        if joint:
            cond /= K * J
        else:
            cond /= J
        out[g] = _nb_h2(total / (K * J)) - cond
    return out


# ---------------------------------------------------------------------------
# protocol Monte Carlo batches
# ---------------------------------------------------------------------------

def _np_depolarizing_block(unitaries, messages, keys, dep_u, repl, eta):
    B, r = keys.shape
    sent = np.where(dep_u < eta, messages[:, None], repl)
    # locked state U_k|sent>, then Bob applies U_k^dagger and reads the largest amplitude
    locked = unitaries[keys, :, sent]                    # (B, r, d)
    back = np.einsum("brij,bri->brj", unitaries[keys].conj(), locked)
    decoded = np.argmax(back.real ** 2 + back.imag ** 2, axis=2)
    d = unitaries.shape[1]
    counts = np.zeros((B, d), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(B), r), decoded.ravel()), 1)
    return decoded, np.argmax(counts, axis=1)


@njit(cache=True, nogil=True)
def _nb_depolarizing_block(unitaries, messages, keys, dep_u, repl, eta):
    B, r = keys.shape
    d = unitaries.shape[1]
    decoded = np.empty((B, r), dtype=np.int64)
    block = np.empty(B, dtype=np.int64)
    counts = np.zeros(d, dtype=np.int64)
    for b in range(B):
        counts[:] = 0
        for u in range(r):
            k = keys[b, u]
            x = messages[b] if dep_u[b, u] < eta else repl[b, u]
            best = -1.0
            arg = 0
            for i in range(d):
                acc = 0.0 + 0.0j
                for l in range(d):
                    acc += unitaries[k, l, i].conjugate() * unitaries[k, l, x]
                q = acc.real * acc.real + acc.imag * acc.imag
                if q > best:
                    best = q
                    arg = i
            decoded[b, u] = arg
            counts[arg] += 1
        top = 0
        for i in range(1, d):
            if counts[i] > counts[top]:
                top = i
        block[b] = top
    return decoded, block


def _np_resend_batch(unitaries, messages, keys, loss_u, detect_u, noise_k, noise_mode, tau):
    B, R = keys.shape
    outcomes = np.full((B, R), OUTCOME_UNUSED, dtype=np.int8)
    modes = np.full((B, R), -1, dtype=np.int64)
    rounds = np.zeros(B, dtype=np.int64)
    delivered = np.zeros(B, dtype=np.bool_)
    decoded = np.full(B, -1, dtype=np.int64)
    active = np.ones(B, dtype=np.bool_)
    for rd in range(R):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        k = keys[idx, rd]
        locked = unitaries[k, :, messages[idx]]                  # Alice: U_k|j>
        passed = loss_u[idx, rd] < tau
        back = np.einsum("bij,bi->bj", unitaries[k].conj(), locked)  # Bob: U_k^dagger
        prob = back.real ** 2 + back.imag ** 2
        cum = np.cumsum(prob, axis=1)
        target = detect_u[idx, rd] * cum[:, -1]
        mode = np.minimum((cum <= target[:, None]).sum(axis=1), prob.shape[1] - 1)
        noisy = noise_k[idx, rd] > 0
        out = np.where(passed, np.where(noisy, OUTCOME_MULTI, OUTCOME_PHOTON),
                       np.where(noisy, OUTCOME_PHOTON, OUTCOME_NO_PHOTON))
        mode = np.where(passed, mode, noise_mode[idx, rd])
        mode = np.where(out == OUTCOME_PHOTON, mode, -1)
        outcomes[idx, rd] = out
        modes[idx, rd] = mode
        rounds[idx] += 1
        hit = out == OUTCOME_PHOTON
        delivered[idx[hit]] = True
        decoded[idx[hit]] = mode[hit]
        active[idx[hit]] = False
    return rounds, delivered, decoded, outcomes, modes


@njit(cache=True, nogil=True)
def _nb_resend_batch(unitaries, messages, keys, loss_u, detect_u, noise_k, noise_mode, tau):
    B, R = keys.shape
    N = unitaries.shape[1]
    outcomes = np.full((B, R), OUTCOME_UNUSED, dtype=np.int8)
    modes = np.full((B, R), -1, dtype=np.int64)
    rounds = np.zeros(B, dtype=np.int64)
    delivered = np.zeros(B, dtype=np.bool_)
    decoded = np.full(B, -1, dtype=np.int64)
    locked = np.empty(N, dtype=np.complex128)
    prob = np.empty(N)
    for b in range(B):
        j = messages[b]
        for rd in range(R):
            k = keys[b, rd]
            for i in range(N):
                locked[i] = unitaries[k, i, j]
            passed = loss_u[b, rd] < tau
            total = 0.0
            for i in range(N):
                acc = 0.0 + 0.0j
                for l in range(N):
                    acc += unitaries[k, l, i].conjugate() * locked[l]
                prob[i] = acc.real * acc.real + acc.imag * acc.imag
                total += prob[i]
            target = detect_u[b, rd] * total
            cum = 0.0
            mode = N - 1
            for i in range(N):
                cum += prob[i]
                if cum > target:
                    mode = i
                    break
            noisy = noise_k[b, rd] > 0
            if passed:
                out = OUTCOME_MULTI if noisy else OUTCOME_PHOTON
            else:
                out = OUTCOME_PHOTON if noisy else OUTCOME_NO_PHOTON
                mode = noise_mode[b, rd]
            outcomes[b, rd] = out
            rounds[b] += 1
            if out == OUTCOME_PHOTON:
                modes[b, rd] = mode
                delivered[b] = True
                decoded[b] = mode
                break
    return rounds, delivered, decoded, outcomes, modes


_IMPLS = {
    "numpy": dict(
        objective=_np_objective,
        objective_and_grad=_np_objective_and_grad,
        batch_objective=_np_batch_objective,
        bloch_grid_objective=_np_bloch_grid_objective,
        ascent=_np_ascent,
        mutual_info_grid=_np_mutual_info_grid,
        depolarizing_block=_np_depolarizing_block,
        resend_batch=_np_resend_batch,
    ),
    "numba": dict(
        objective=_nb_objective,
        objective_and_grad=_nb_objective_and_grad,
        batch_objective=_nb_batch_objective,
        bloch_grid_objective=_nb_bloch_grid_objective,
        ascent=_nb_ascent,
        mutual_info_grid=_nb_mutual_info_grid,
        depolarizing_block=_nb_depolarizing_block,
        resend_batch=_nb_resend_batch,
    ),
}


def implementations(backend):
    """Kernel table for ``backend`` ('numba' or 'numpy')."""
    return _IMPLS[backend]


_active = _IMPLS[BACKEND]
objective = _active["objective"]
objective_and_grad = _active["objective_and_grad"]
batch_objective = _active["batch_objective"]
bloch_grid_objective = _active["bloch_grid_objective"]
ascent = _active["ascent"]
mutual_info_grid = _active["mutual_info_grid"]
depolarizing_block = _active["depolarizing_block"]
resend_batch = _active["resend_batch"]
