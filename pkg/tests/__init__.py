"""Test suite for the hofmtl package."""
