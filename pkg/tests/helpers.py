"""Independent oracles shared by the test modules."""

import numpy as np


def rel_err(a, b, floor=1e-7):
    """Elementwise relative error with an absolute floor for near-zero entries."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at flat ``x``."""
    x = np.asarray(x, dtype=float).copy()
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def matmul_forward(net, x):
    """Loop-based evaluation of a DenseNet, written without the library's vectorised path."""
    x = np.asarray(x, dtype=float)
    h = [(x[i] - net.in_mean[i]) / net.in_std[i] for i in range(len(x))]
    n_layers = len(net.weights)
    for layer in range(n_layers):
        w, b = net.weights[layer], net.biases[layer]
        out = []
        for j in range(w.shape[1]):
            z = b[j]
            for i in range(w.shape[0]):
                z += h[i] * w[i, j]
            if layer < n_layers - 1:
                z = np.tanh(z) if net.activations[layer] == "tanh" else max(z, 0.0)
            out.append(z)
        h = out
    return np.array([h[j] * net.out_std[j] + net.out_mean[j] for j in range(len(h))])


ACCEPTANCE = []  # "criterion N: PASS|FAIL ..." lines, echoed in the terminal summary


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line, flush=True)
    return ok
