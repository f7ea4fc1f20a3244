"""
Test package for the green network planner.
"""
