"""Task modules that turn validated experiment configs into artifacts."""
