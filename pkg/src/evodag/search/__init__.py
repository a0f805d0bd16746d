"""
Asynchronous evolution: population, master and drivers.

Modules:
- config: TOML configuration dataclasses
- population: fitness-ordered population and operator statistics
- master: work requests, result insertion, reissue and checkpoints
- sequential_search: single-process driver
- distributed_search / evaluation_worker: Ray actor pool driver (imported lazily, needs ray)
- stats_logger: CSV progress files and stdout summaries
"""

from .config import Config, DatasetConfig, SearchConfig, dump_config, load_config
from .master import Master, open_master
from .population import InsertOutcome, OperatorStats, Population
from .sequential_search import SequentialSearch

__all__ = [
    "Config",
    "DatasetConfig",
    "InsertOutcome",
    "Master",
    "OperatorStats",
    "Population",
    "SearchConfig",
    "SequentialSearch",
    "dump_config",
    "load_config",
    "open_master",
]
