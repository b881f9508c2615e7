"""Closed-loop acoustic howling simulation and suppression toolkit."""
