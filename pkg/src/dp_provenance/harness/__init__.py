from dp_provenance.harness.experiment import (
    ExperimentSpec,
    run_experiment,
    summarize_cells,
)
from dp_provenance.harness.metrics import (
    RunReport,
    compute_ndcfg,
    compute_relative_error,
    summarize_run,
)
from dp_provenance.harness.synthetic import SyntheticDataConfig, generate_adult_like
from dp_provenance.harness.workloads import (
    BfsConfig,
    BfsTrace,
    RrqConfig,
    generate_rrq,
    run_bfs_task,
)

__all__ = [
    'BfsConfig',
    'BfsTrace',
    'ExperimentSpec',
    'RrqConfig',
    'RunReport',
    'SyntheticDataConfig',
    'compute_ndcfg',
    'compute_relative_error',
    'generate_adult_like',
    'generate_rrq',
    'run_bfs_task',
    'run_experiment',
    'summarize_cells',
    'summarize_run',
]
