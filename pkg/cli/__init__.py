"""
CLI Module

Command-line interface for preprocessing, training and evaluation runs.
"""
