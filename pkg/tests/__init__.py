"""Test suite for splitstream."""
