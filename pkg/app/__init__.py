"""
lasso-condition: certified LASSO support selection and condition-number experiments.
"""

__version__ = "0.1.0"
