"""Software replica of a string-actuated fingertip haptics pipeline.

Rigid-body physics with a virtually coupled hand, haptic signal synthesis,
an actuator model, scripted scenario replays and deterministic traces.
"""

__version__ = "0.1.0"
