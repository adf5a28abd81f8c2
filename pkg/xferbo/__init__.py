from . import configuratron
from . import benchmarks
from . import data
from . import metrics
from . import optim
from . import surrogates
from . import transforms
from . import utils
