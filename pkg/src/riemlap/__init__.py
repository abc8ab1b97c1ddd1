"""Riemannian Laplace approximations: geodesic samplers under Monge and Fisher metrics."""

__version__ = "0.1.0"
