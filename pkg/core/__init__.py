"""
Core Module

Pose-to-accelerometer synthesis and activity recognition: preprocessing,
models, training regimes, evaluation and the synthetic kinematic dataset.
"""
