"""Shared test oracles: finite differences and a relative-error gauge.

These stay independent of the autodiff engine on purpose -- they perturb raw
numpy arrays and call a user-supplied scalar function.
"""

import numpy as np


def build_grid_mesh(rows=3, cols=4, spacing=5.0):
    """Small planar triangle-grid mesh, valid under HandMesh invariants."""
    from vibemesh.mesh import HandMesh

    verts = np.array([[c * spacing, r * spacing, 0.0] for r in range(rows) for c in range(cols)])
    faces = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            b = a + 1
            d = a + cols
            e = d + 1
            faces += [[a, b, e], [a, e, d]]
    return HandMesh(verts, np.array(faces))


def numeric_gradient(f, arrays, h=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. each array.

    Arrays are perturbed in place entry by entry and restored; ``f`` must
    read the same array objects on every call. Use float64 inputs.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    """Infinity-norm relative disagreement between two arrays.

    The floor absorbs central-difference noise (~eps*f/h) when the true
    gradient is structurally zero, e.g. a softmax shift bias.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-6)
    return np.abs(a - b).max(initial=0.0) / denom
