"""Kerr-soliton-driven dynamical Casimir simulator for a coupled optical/microwave ring pair."""

__version__ = "0.1.0"
