# Sphinx configuration of the collocetl documentation.
#
import datetime

import collocetl

project = "collocetl"
author = "collocetl contributors"
copyright = f"{datetime.date.today().year}, {author}"
version = "%i.%i" % collocetl.version_info[:2]
release = collocetl.__version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.napoleon",
    "autodoc_traits",
    "myst_parser",
    "sphinx_copybutton",
]

root_doc = "index"
source_suffix = [".md", ".rst"]
exclude_patterns = ["_build"]

# docstrings are reStructuredText, `name` renders as code like in the md pages
default_role = "literal"

# the configurables document their traits, keep them in source order
autodoc_member_order = "bysource"
autodoc_typehints = "none"

myst_enable_extensions = ["colon_fence", "deflist"]
myst_heading_anchors = 3

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "tornado": ("https://www.tornadoweb.org/en/stable/", None),
    "traitlets": ("https://traitlets.readthedocs.io/en/stable/", None),
}
# only resolve references written as :external:...
intersphinx_disabled_reftypes = ["*"]

html_title = "collocetl"
html_theme = "sphinx_book_theme"
html_theme_options = {
    "path_to_docs": "docs/source",
    "use_edit_page_button": False,
}
