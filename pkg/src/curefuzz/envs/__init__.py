from .base import CRASH_PREDICATES, ENVIRONMENTS, make_env, register_crash_predicate, register_env
from . import corridor, encounter, navi2d, stubs  # noqa: F401  (registration side effects)
