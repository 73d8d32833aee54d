"""Reinforcing a retrospective reflection policy for a frozen text agent."""
