import os
import sys

sys.path.insert(0, os.path.abspath("../.."))

project = "affordmap"
author = "the affordmap developers"
copyright = "2026, " + author
release = "0.1.0"

extensions = ["sphinx.ext.autodoc"]
autodoc_member_order = "bysource"
autodoc_typehints = "description"

master_doc = "index"
html_theme = "alabaster"
