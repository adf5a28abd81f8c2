# Sphinx configuration of the xferbo documentation.
import os
import sys
sys.path.insert(0, os.path.abspath('../..'))

project = 'xferbo'
copyright = '2026, xferbo developers'
author = 'xferbo developers'
release = '0.1-alpha'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'autodocsumm',
]

# Docstrings are numpy style throughout
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_use_rtype = False

autodoc_member_order = 'bysource'
autodoc_default_options = {
    'members': True,
    'autosummary': True,
}
# The guides show configuration entries as YAML
highlight_language = 'yaml'

templates_path = []
exclude_patterns = []

html_theme = 'sphinx_rtd_theme'
html_title = 'xferbo {}'.format(release)
