"""Optional numba acceleration.

Every kernel in this package is plain Python operating on numpy arrays; when
numba is importable it is compiled, otherwise it runs as is (slowly).
"""

try:
    import numba

    def jit(func):
        return numba.njit(cache=True)(func)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    def jit(func):
        return func

    HAVE_NUMBA = False
