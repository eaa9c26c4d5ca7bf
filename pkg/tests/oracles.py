"""Independent numerical oracles shared by the test suite.

The finite-difference gradient here is the reference every analytic
gradient in the package is checked against. It only ever calls the
forward path, never the tape.
"""

import numpy as np


def finite_diff_grad(f, params, h=1e-5):
    """Central finite differences of scalar f wrt a dict of float64 arrays.

    f: callable taking no args; reads params (mutated in place around calls).
    Returns {name: array} with the same shapes.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
