"""evoforge: evolutionary design of physical hardware against expensive
black-box simulators.

Three pluggable module families (genome representations, evaluators, and
evolvers) wired together by a JSON experiment config and driven from the
``evoforge`` command line.
"""

__version__ = "0.1.0"
