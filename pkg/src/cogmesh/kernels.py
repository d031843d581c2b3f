"""Kernel backend selection: compiled extension if built, pure Python otherwise.

`COMPILED` tells callers (and the benchmark) which backend won. Both backends
are importable side by side as `cogmesh._kernels_py` and `cogmesh._speedups`
for parity testing.
"""

try:
    from cogmesh._speedups import (  # noqa: F401
        COMPILED,
        blend_refresh,
        hello_reinforce,
        largest_same_master_component,
        quantize,
        reward,
    )
except ImportError:
    from cogmesh._kernels_py import (  # noqa: F401
        COMPILED,
        blend_refresh,
        hello_reinforce,
        largest_same_master_component,
        quantize,
        reward,
    )
