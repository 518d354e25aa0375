"""Single-zone building control with a branching dueling Q-network.

Modules:

* ``weather``: weather series I/O, resampling and synthetic generation
* ``envsim``: lumped RC zone simulator with HVAC, lighting, blind and window
* ``comfort``: PMV, comfort penalties and the weighted reward
* ``neural``: numpy MLP with a dueling shared trunk and per-action-branch heads
* ``agent``: double-Q learner with prioritized replay, rollouts and training
* ``baselines``: rule-based, random and HVAC-only controllers
* ``evalkit``: metrics, calibration statistics, ablations and reports
* ``cli``: the ``zonectl`` command-line entry point
"""

__version__ = "0.1.0"
