# Configuration file for the Sphinx documentation builder.
# http://www.sphinx-doc.org/en/master/config

import os
import sys
sys.path.insert(0, os.path.abspath('..'))


# -- Project information -----------------------------------------------------

project = 'tspq: hybrid quantum-classical TSP'
copyright = '2026, tspq developers'
author = 'tspq developers'

version = '0.1'
release = '0.1'


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'numpydoc',
]

source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']


# -- Output ------------------------------------------------------------------

htmlhelp_basename = 'tspqdoc'

man_pages = [
    (master_doc, 'tspq', 'tspq Documentation', [author], 1)
]
