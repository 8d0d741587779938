"""Pseudospectral simulation of the nonrelativistic limit of Klein-Gordon-Maxwell."""
