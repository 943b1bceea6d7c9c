"""Desk-scale perceptive locomotion lab.

Procedural terrains with exact height queries, a robot-centric elevation
map, a simplified biped environment, a full gait-shaping reward suite,
contrastive perceptive/blind state estimators, and a PPO trainer with
symmetry regularization and curricula.
"""

__version__ = "0.1.0"
