"""shearlab: a numerical laboratory for shear flows with fading memory.

The package builds completely monotone relaxation kernels and odd damping
nonlinearities (including the reptation pair), verifies the structural
hypotheses behind them, inverts kernel convolutions, advances the
history-dependent momentum balance on an interval, and evaluates the energy
and hyperbolicity certificates that accompany small-data solutions.
"""

__version__ = "0.1.0"

from . import config, diagnostics, errors, kernels, solver, spectral, volterra  # noqa: E402,F401
