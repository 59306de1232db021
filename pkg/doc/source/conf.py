# Sphinx configuration for the apiae docs.
import os
import sys

sys.path.insert(0, os.path.abspath('../..'))
import apiae
import sphinx_rtd_theme

project = 'apiae'
copyright = '2026, apiae developers'
author = 'apiae developers'
version = apiae.__version__
release = apiae.__version__

extensions = [
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
    'sphinx.ext.doctest',
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary',
    'sphinx.ext.mathjax',
    'sphinx_rtd_theme',
    'autoapi.extension',
]

doctest_global_setup = """
import numpy as np
import apiae
"""
default_role = "literal"
autosummary_generate = True
autoapi_dirs = ['../../apiae']
autoapi_generate_api_docs = False
napoleon_numpy_docstring = True
pygments_style = 'sphinx'
exclude_patterns = ['autodocs/*.tmp']

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
