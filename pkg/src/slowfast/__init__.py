"""Entry-exit maps of planar slow-fast systems, checked against simulation.

Modules
-------
system       slow-fast system model, catalog and hypothesis checks
integrate    Dormand-Prince 5(4) with dense output and event location
entryexit    entry-exit function and simulated return map
blowup       blow-up charts and singular-orbit transition maps
asymptotics  fits on the eps / eps*log(eps) scale, w -> exp(-1/w) reduction
example5     closed forms for x' = eps, z' = (x + alpha z) z^2
cli          command-line interface
"""
from .system import SlowFastSystem, builtin, check_conditions, rhs
from .integrate import EventSpec, Tolerances
from .entryexit import (
    convergence_study,
    exit_derivative,
    numerical_return,
    theoretical_exit,
)

__version__ = "0.1.0"
