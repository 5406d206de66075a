"""Tests for nonrecip."""
