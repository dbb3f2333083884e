from ._version import __version__, version_info  # noqa
from .colloc import CollocConfig, CollocatedPixel, TrackProfile, collocate  # noqa
from .errors import *  # noqa
from .executor import PipelineExecutor  # noqa
from .geodesy import forward, grid_params_for_band, inverse, is_visible  # noqa
from .loader import Loader  # noqa
from .pipeline_graph import PipelineGraph, collocation_graph  # noqa
from .sources import Extractor, SourceSpec  # noqa
