"""Racing path-tracking lab.

Pure Pursuit with online-selected lookahead and steering gain, a
kinematic-bicycle simulator, a from-scratch PPO trainer for the parameter
policy, a kinematic MPC baseline with an internal ADMM QP solver, and a
lap-completion evaluation harness.
"""

__version__ = "0.1.0"
