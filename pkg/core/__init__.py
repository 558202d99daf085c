from .fhn_model import FhnParams, State, Derivative
from .assertion_utils import NumericAssertor
