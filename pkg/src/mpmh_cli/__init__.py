"""Top-level package for mpmh_cli."""

__author__ = """Soldatov Serhii"""
__email__ = "soldatov.own@gmail.com"
