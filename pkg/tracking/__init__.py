# Make the necessary elements accessible from the package level
from .config import TrackerConfig, load_config
from .crf import CrfParams, PairwiseMode, infer
from .lifecycle import Tracker
from .metrics import evaluate
