"""Independent reference computations used only by the tests."""
import numpy as np
import sympy


def jacobi_singular_values(A, tol=1e-15, max_sweeps=60):
    """Singular values by one-sided (Hestenes) Jacobi rotations.

    Disjoint column pairs are rotated simultaneously following a round-robin
    schedule, so each round is a handful of vectorized operations.
    """
    A = np.array(A, dtype=np.float64)
    if A.shape[0] < A.shape[1]:
        A = A.T.copy()
    n = A.shape[1]
    if n % 2:
        A = np.column_stack([A, np.zeros(A.shape[0])])
        n += 1
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        rounds.append((np.array(players[: n // 2]), np.array(players[n // 2:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]

    for _ in range(max_sweeps):
        rotated = False
        for I, J in rounds:
            ai, aj = A[:, I], A[:, J]
            alpha = np.einsum("ij,ij->j", ai, ai)
            beta = np.einsum("ij,ij->j", aj, aj)
            gamma = np.einsum("ij,ij->j", ai, aj)
            todo = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not todo.any():
                continue
            rotated = True
            g = np.where(todo, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta ** 2))
            t = np.where(zeta == 0, 1.0, t)
            t = np.where(todo, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t ** 2)
            s = c * t
            A[:, I], A[:, J] = c * ai - s * aj, s * ai + c * aj
        if not rotated:
            break
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


def symbolic_q1_matrices():
    """Exact Q1 stiffness and mass matrices on the unit square (corner order SW, SE, NE, NW)."""
    x, y = sympy.symbols("x y")
    basis = [(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y]
    K = sympy.zeros(4, 4)
    M = sympy.zeros(4, 4)
    for i, p in enumerate(basis):
        for j, q in enumerate(basis):
            grad = sympy.diff(p, x) * sympy.diff(q, x) + sympy.diff(p, y) * sympy.diff(q, y)
            K[i, j] = sympy.integrate(grad, (x, 0, 1), (y, 0, 1))
            M[i, j] = sympy.integrate(p * q, (x, 0, 1), (y, 0, 1))
    return np.array(K, dtype=float), np.array(M, dtype=float)


def finite_difference_grad(fn, params, step=1e-6):
    """Central differences of a scalar ``fn()`` w.r.t. every entry of every array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + step
            up = fn()
            p[idx] = old - step
            down = fn()
            p[idx] = old
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def brute_force_multiplicity(coarse, fine):
    """n(x) by testing every fine node against every coarse cell's closed box."""
    n = np.zeros(fine.n_nodes, dtype=int)
    for cell in coarse.cells:
        lo = coarse.nodes[cell].min(axis=0)
        hi = coarse.nodes[cell].max(axis=0)
        inside = np.all((fine.nodes >= lo - 1e-12) & (fine.nodes <= hi + 1e-12), axis=1)
        n += inside
    return n


def extended_loss(weights, biases, X, Z, alpha=0.0, n_param=None, activation="relu"):
    """Regularized MSE evaluated independently in ``np.longdouble``."""
    dt = np.longdouble
    act = {"relu": lambda a: np.maximum(a, dt(0)), "tanh": np.tanh, "identity": lambda a: a}[activation]
    a = np.asarray(X, dtype=dt)
    for i, (W, b) in enumerate(zip(weights, biases)):
        a = a @ np.asarray(W, dtype=dt) + np.asarray(b, dtype=dt)
        if i < len(weights) - 1:
            a = act(a)
    r = a - np.asarray(Z, dtype=dt)
    mse = (r * r).sum(axis=1).mean()
    if n_param is None:
        n_param = sum(W.size + b.size for W, b in zip(weights, biases))
    norms = [np.sqrt((np.asarray(W, dtype=dt) ** 2).sum()) for W in weights]
    return mse + dt(alpha) / dt(n_param) * np.prod(norms)


def extended_fd_grad(weights, biases, X, Z, alpha=0.0, activation="relu", step=1e-6):
    """Central differences of :func:`extended_loss` in long double precision."""
    Ws = [np.asarray(W, dtype=np.longdouble).copy() for W in weights]
    bs = [np.asarray(b, dtype=np.longdouble).copy() for b in biases]
    n_param = sum(W.size + b.size for W, b in zip(Ws, bs))
    h = np.longdouble(step)
    out = []
    for p in Ws + bs:
        g = np.zeros(p.shape, dtype=np.longdouble)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = extended_loss(Ws, bs, X, Z, alpha, n_param, activation)
            p[idx] = old - h
            down = extended_loss(Ws, bs, X, Z, alpha, n_param, activation)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out[:len(Ws)], out[len(Ws):]
