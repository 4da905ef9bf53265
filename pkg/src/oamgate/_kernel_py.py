"""Pure numpy gate kernels. Reference path and fallback for the compiled core."""

import numpy as np


def _metric_cotangents(V, U):
    """Fidelity/probability and their gradients w.r.t. Re V + i Im V."""
    N = V.shape[0]
    t = np.vdot(U, V)
    s = np.vdot(V, V).real
    u = np.vdot(U, U).real
    if s == 0.0:
        return 0.0, 0.0, np.zeros_like(V), np.zeros_like(V)
    F = abs(t) ** 2 / (u * s)
    P = s / N
    gF = 2.0 * t * U / (u * s) - 2.0 * abs(t) ** 2 / (u * s * s) * V
    gP = 2.0 * V / N
    return F, P, gF, gP


def three_layer_grad(e1, e3, eg, enc, ks, U):
    """Central block of ``C1 D(g) C3`` with fidelity/probability gradients.

    ``e1``/``e3`` are the phase factors of the left and right ANGLE layers,
    ``eg`` of the SPECTRUM layer. Only channels ``ks`` are summed over in the
    middle (all K for an open boundary, the working window when filtered).

    Returns ``V, F, P, dF, dP`` where each gradient is a tuple
    ``(d/df_left, d/df_right, d/dg)`` of length-K real arrays.
    """
    K = e1.size
    C1 = np.fft.ifft(e1)
    C3 = np.fft.ifft(e3)
    ia = (enc[:, None] - ks[None, :]) % K
    ib = (ks[:, None] - enc[None, :]) % K
    a = C1[ia]
    b = C3[ib]
    egk = eg[ks]
    ae = a * egk[None, :]
    eb = egk[:, None] * b
    V = ae @ b
    F, P, gF, gP = _metric_cotangents(V, U)
    grads = []
    for gam in (gF, gP):
        ga = gam @ eb.conj().T
        gb = ae.conj().T @ gam
        dgk = np.real(1j * egk * np.einsum("ij,ik,kj->k", gam.conj(), a, b))
        gc1 = np.bincount(ia.ravel(), weights=ga.real.ravel(), minlength=K) \
            + 1j * np.bincount(ia.ravel(), weights=ga.imag.ravel(), minlength=K)
        gc3 = np.bincount(ib.ravel(), weights=gb.real.ravel(), minlength=K) \
            + 1j * np.bincount(ib.ravel(), weights=gb.imag.ravel(), minlength=K)
        d1 = np.real(1j / K * e1 * np.conj(np.fft.fft(gc1)))
        d3 = np.real(1j / K * e3 * np.conj(np.fft.fft(gc3)))
        dg = np.zeros(K)
        dg[ks] = dgk
        grads.append((d1, d3, dg))
    return V, F, P, grads[0], grads[1]


def stack_grad(domains, phases, enc, mask, U):
    """General odd/even-length stack; same outputs as :func:`three_layer_grad`.

    ``domains`` lists "ANGLE"/"SPECTRUM" in product order, ``phases`` is a
    (M, K) array, ``mask`` is a boolean channel projector or None.
    Gradients come back as an (M, K) array per metric.
    """
    M, K = phases.shape
    N = enc.size
    X = np.zeros((K, N), dtype=complex)
    X[enc, np.arange(N)] = 1.0
    fac = np.exp(1j * phases)
    saved = []
    for m in range(M - 1, -1, -1):
        if domains[m] == "ANGLE":
            Z = np.fft.fft(X, axis=0)
            saved.append(Z)
            X = np.fft.ifft(fac[m][:, None] * Z, axis=0)
        else:
            saved.append(X)
            X = fac[m][:, None] * X
        if mask is not None:
            X = X * mask[:, None]
    saved.reverse()
    V = X[enc, :]
    F, P, gF, gP = _metric_cotangents(V, U)
    out = []
    for gam in (gF, gP):
        G = np.zeros((K, N), dtype=complex)
        G[enc, :] = gam
        dph = np.zeros((M, K))
        for m in range(M):
            if mask is not None:
                G = G * mask[:, None]
            if domains[m] == "ANGLE":
                Z = saved[m]
                GW = np.fft.fft(G, axis=0) / K
                dph[m] = np.real(np.sum(np.conj(GW) * 1j * fac[m][:, None] * Z, axis=1))
                G = K * np.fft.ifft(np.conj(fac[m])[:, None] * GW, axis=0)
            else:
                X0 = saved[m]
                dph[m] = np.real(np.sum(np.conj(G) * 1j * fac[m][:, None] * X0, axis=1))
                G = np.conj(fac[m])[:, None] * G
        out.append(dph)
    return V, F, P, out[0], out[1]
