"""Numerical building blocks: meshes, truth FEM, EIM, reduced basis, certification and the modal oracle."""
