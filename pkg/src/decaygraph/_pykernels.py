"""numpy kernels; the fallback when the compiled module is unavailable.

Each kernel evaluates the same expression, in the same operation order,
as its counterpart in ``_ckernels.pyx`` so both backends agree bitwise.
Position lists hold flat indices of the bins hit by the current event;
``du``/``dv`` are zeroed scratch rows owned by the caller.
"""

NAME = "python"


def mix_pair(H, u, v, pos_u, pos_v, au, bu, av, bv, du, dv):
    du[pos_u] = 1.0
    dv[pos_v] = 1.0
    x = H[u]
    y = H[v]
    new_u = bu * x + (1.0 - bu) * (au * y + (1.0 - au) * du)
    new_v = bv * y + (1.0 - bv) * (av * x + (1.0 - av) * dv)
    H[u] = new_u
    H[v] = new_v
    du[pos_u] = 0.0
    dv[pos_v] = 0.0


def mix_self(H, u, pos, a, b, d):
    d[pos] = 1.0
    x = H[u]
    H[u] = b * x + (1.0 - b) * (a * x + (1.0 - a) * d)
    d[pos] = 0.0


def _gather(PT, pos, out):
    out[:] = 0.0
    for p in pos:
        out += PT[p]
    return out


def theta_pair(T, u, v, PT, pos_u, pos_v, au, bu, av, bv, hu, hv):
    _gather(PT, pos_u, hu)
    _gather(PT, pos_v, hv)
    x = T[u]
    y = T[v]
    new_u = bu * x + (1.0 - bu) * (au * y + (1.0 - au) * hu)
    new_v = bv * y + (1.0 - bv) * (av * x + (1.0 - av) * hv)
    T[u] = new_u
    T[v] = new_v


def theta_self(T, u, PT, pos, a, b, h):
    _gather(PT, pos, h)
    x = T[u]
    T[u] = b * x + (1.0 - b) * (a * x + (1.0 - a) * h)
