"""Hot numeric kernels.

Every kernel has a loop implementation compiled with numba and a vectorised
numpy implementation. The public names at the bottom of the module resolve to
the numba version unless numba is unavailable or disabled through
``HETCAUSAL_DISABLE_NUMBA``; both variants stay importable for tests and the
benchmark.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit


# --------------------------------------------------------------------------
# acyclicity: h(B) = tr[(I + t B*B)^k] - w and its gradient; k = w for the
# full graph, larger when B is a diagonal block of a bigger graph
# --------------------------------------------------------------------------

def acyclicity_numpy(B, t, power):
    w = B.shape[0]
    E = np.eye(w) + t * B * B
    P = np.linalg.matrix_power(E, power - 1)
    value = float(np.sum(P * E.T)) - w
    grad = 2.0 * t * power * P.T * B
    return value, grad


@njit
def acyclicity_numba(B, t, power):
    w = B.shape[0]
    E = np.empty((w, w))
    for i in range(w):
        for j in range(w):
            E[i, j] = t * B[i, j] * B[i, j]
        E[i, i] += 1.0
    # P = E^(power-1) by binary powering
    P = np.eye(w)
    base = E.copy()
    k = power - 1
    while k > 0:
        if k & 1:
            P = P @ base
        k >>= 1
        if k > 0:
            base = base @ base
    value = 0.0
    for i in range(w):
        for j in range(w):
            value += P[i, j] * E[j, i]
    value -= w
    grad = np.empty((w, w))
    scale = 2.0 * t * power
    for i in range(w):
        for j in range(w):
            grad[i, j] = scale * P[j, i] * B[i, j]
    return value, grad


# --------------------------------------------------------------------------
# masked least squares: f(B) = 1/(2n) sum_{j in resp} ||D_j - D B_j||^2,
# evaluated through the Gram matrix S = D'D
# --------------------------------------------------------------------------

def ls_loss_grad_numpy(B, S, n, resp):
    w = B.shape[0]
    R = np.eye(w) - B
    SR = S @ R
    col = np.sum(R * SR, axis=0)
    loss = 0.5 / n * float(np.sum(col[resp]))
    grad = -SR / n
    grad[:, ~resp] = 0.0
    return loss, grad


@njit
def ls_loss_grad_numba(B, S, n, resp):
    w = B.shape[0]
    grad = np.zeros((w, w))
    loss = 0.0
    r = np.empty(w)
    for j in range(w):
        if not resp[j]:
            continue
        for i in range(w):
            r[i] = -B[i, j]
        r[j] += 1.0
        for i in range(w):
            acc = 0.0
            for k in range(w):
                acc += S[i, k] * r[k]
            loss += r[i] * acc
            grad[i, j] = -acc / n
    return 0.5 * loss / n, grad


def augmented_numpy(B, S, n, resp, t, power, lam1, c):
    f, g = ls_loss_grad_numpy(B, S, n, resp)
    h, gh = acyclicity_numpy(B, t, power)
    return f + lam1 * h + c * h * h, g + (lam1 + 2.0 * c * h) * gh, h


@njit
def augmented_numba(B, S, n, resp, t, power, lam1, c):
    f, g = ls_loss_grad_numba(B, S, n, resp)
    h, gh = acyclicity_numba(B, t, power)
    return f + lam1 * h + c * h * h, g + (lam1 + 2.0 * c * h) * gh, h


# --------------------------------------------------------------------------
# lasso by cyclic coordinate descent on the covariance form
# min_b 1/(2n)||y - X b||^2 + lam ||b||_1
# --------------------------------------------------------------------------

@njit
def lasso_cd_numba(G, c, lam, max_iter, tol):
    k = G.shape[0]
    beta = np.zeros(k)
    # grad_part[j] = sum_l G[j, l] beta[l]
    gb = np.zeros(k)
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        max_delta = 0.0
        for j in range(k):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            rho = c[j] - gb[j] + gjj * beta[j]
            if rho > lam:
                new = (rho - lam) / gjj
            elif rho < -lam:
                new = (rho + lam) / gjj
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                for l in range(k):
                    gb[l] += G[l, j] * delta
                beta[j] = new
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
        if max_delta < tol:
            break
    return beta, n_iter


def lasso_cd_numpy(G, c, lam, max_iter, tol):
    k = G.shape[0]
    beta = np.zeros(k)
    gb = np.zeros(k)
    diag = np.diag(G).copy()
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        max_delta = 0.0
        for j in range(k):
            if diag[j] <= 0.0:
                continue
            rho = c[j] - gb[j] + diag[j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / diag[j]
            delta = new - beta[j]
            if delta != 0.0:
                gb += G[:, j] * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return beta, n_iter


# --------------------------------------------------------------------------
# forward simulation of the linear SEM with interaction columns
# column j = sum_i D[:, i] B[i, j] + noise[:, j], visited in `order`;
# columns p+1..2p are X_k * A; columns flagged in `fixed` are copied verbatim
# --------------------------------------------------------------------------

def sem_sample_numpy(B, noise, order, p, fixed, fixed_vals):
    n, w = noise.shape
    D = np.zeros((n, w))
    for j in order:
        if fixed[j]:
            D[:, j] = fixed_vals[:, j]
        elif p + 1 <= j < 2 * p + 1:
            D[:, j] = D[:, j - p - 1] * D[:, p]
        else:
            D[:, j] = D @ B[:, j] + noise[:, j]
    return D


@njit
def sem_sample_numba(B, noise, order, p, fixed, fixed_vals):
    n, w = noise.shape
    D = np.zeros((n, w))
    for jj in range(order.shape[0]):
        j = order[jj]
        if fixed[j]:
            for r in range(n):
                D[r, j] = fixed_vals[r, j]
        elif j >= p + 1 and j < 2 * p + 1:
            for r in range(n):
                D[r, j] = D[r, j - p - 1] * D[r, p]
        else:
            for r in range(n):
                acc = noise[r, j]
                for i in range(w):
                    b = B[i, j]
                    if b != 0.0:
                        acc += D[r, i] * b
                D[r, j] = acc
    return D


if HAVE_NUMBA:
    acyclicity_kernel = acyclicity_numba
    ls_loss_grad = ls_loss_grad_numba
    augmented = augmented_numba
    lasso_cd = lasso_cd_numba
    sem_sample = sem_sample_numba
else:
    acyclicity_kernel = acyclicity_numpy
    ls_loss_grad = ls_loss_grad_numpy
    augmented = augmented_numpy
    lasso_cd = lasso_cd_numpy
    sem_sample = sem_sample_numpy
