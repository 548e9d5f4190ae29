"""Data-driven room heating and bidirectional EV charging control.

Synthetic plant, preprocessing, black-box recurrent surrogates, safety-clipped
battery model, RL environments, DDPG and rule-based baselines.
"""
__version__ = "0.1.0"
