"""sparsegrid: cycle-level modeling of large-scale two-sided sparse CNN
accelerators.

The package splits into the functional layer (``tensor``: bitmask sparse
tensors and the dense convolution oracle), the policy layer (``balance``:
filter sorting, alternating assignment, round-robin sub-chunks, telescoping
schedules), the structural layer (``arch``: grids, buffer budgets, colors),
the transport layer (``interconnect``: banks, request combining, snarfing),
the timing layer (``engine``: the simulator proper), and the experiment
runner (``cli``/``sweep``/``specfile``).
"""

__version__ = "0.1.0"
