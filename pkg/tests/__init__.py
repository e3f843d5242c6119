"""Test suite for the ssdo_te package."""
