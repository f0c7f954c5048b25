"""Tests for the moire_sensor_sim package."""
