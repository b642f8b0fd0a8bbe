"""Unit test package for mpmh_cli."""
