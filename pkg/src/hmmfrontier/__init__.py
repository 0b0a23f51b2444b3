"""Nonparametric two-state hidden Markov models near the i.i.d. frontier."""
