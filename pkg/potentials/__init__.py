from .main import KINDS, PotentialModel, evaluate, explored_range, nonlinearity_scale
