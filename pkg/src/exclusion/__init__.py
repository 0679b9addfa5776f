"""Graphical constructions of simple exclusion processes on finite windows."""

import os

# the bundled TBB is too old for numba; pick a layer that never probes it
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .clocks import EventLog, TimeInterval, sample_event_log, site_events, time_reverse, time_shift  # noqa: E402
from .environment import (  # noqa: E402
    EnvironmentSpec,
    RateField,
    build_env,
    build_lattice_env,
    build_mott_env,
    build_ppp_env,
    check_c1,
    check_liggett,
    symmetrize,
)
from .errors import (  # noqa: E402
    CapacityError,
    ComponentBlowup,
    ConfigurationError,
    EmptyWindowError,
    ExplosionError,
)
from .rng import replica_seed  # noqa: E402
from .sep_harris import build_window_graph, components, dependency_set, evolve_sep  # noqa: E402
from .stirring import EXPLOSION, evolve_ssep, sample_path_ssep, stirring_permutation, trace_back  # noqa: E402

__version__ = "0.1.0"
