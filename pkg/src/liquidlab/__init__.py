"""liquidlab: electrical vs chemical synapse CT-RNNs, trained by imitation
on a synthetic lane-keeping world, with the paper-style evaluation battery.
"""

__version__ = "0.1.0"

from .wiring import (  # noqa: F401
    WiringConfig,
    WiringGraph,
    build_fully_connected,
    build_ncp,
    compile_edges,
    count_parameters,
)
