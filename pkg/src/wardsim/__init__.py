"""Deterministic simulator for a leader-follower inpatient-care robot swarm.

Subsystems:

- ``kinematics``      differential-drive ground truth and dead reckoning
- ``line_following``  5-way IR sensor model and PID steering
- ``rf_channel``      lossy addressed 2.4 GHz-style unicast channel
- ``protocol``        leader-follower task delegation state machines
- ``vitals``          wearable noise models, threshold triage, fall detector
- ``ml``              from-scratch KNN / decision tree / random forest triage
- ``scenario``        config files, validation, shipped presets
- ``engine``          fixed-timestep run loop, event log, metrics
"""

__version__ = "0.1.0"


class ConfigurationError(ValueError):
    """Invalid parameter or configuration value."""


class AddressingError(RuntimeError):
    """Packet sent to an address that does not exist in the scenario."""


class InvariantError(RuntimeError):
    """Internal simulator invariant violated; the run must abort."""
