from .tasks import (
    ClassificationTask,
    Dataset,
    NormalizationMap,
    RegressionTask,
    REGRESSION_TASKS,
    bessel_j0,
    load_tabular,
    make_moons,
    make_spirals,
    read_dataset_csv,
    regression_dataset,
    split_dataset,
    target_eval,
    write_dataset_csv,
)
from .mlp import (
    MlpBaseline,
    MlpModel,
    mlp_baseline_train,
    mlp_multi_restart,
    mlp_param_count,
)
from .sweeps import SWEEP_GRIDS, SweepGrid, run_sweep, write_sweep_csv

__all__ = [
    "ClassificationTask",
    "Dataset",
    "NormalizationMap",
    "RegressionTask",
    "REGRESSION_TASKS",
    "bessel_j0",
    "load_tabular",
    "make_moons",
    "make_spirals",
    "read_dataset_csv",
    "regression_dataset",
    "split_dataset",
    "target_eval",
    "write_dataset_csv",
    "MlpBaseline",
    "MlpModel",
    "mlp_baseline_train",
    "mlp_multi_restart",
    "mlp_param_count",
    "SWEEP_GRIDS",
    "SweepGrid",
    "run_sweep",
    "write_sweep_csv",
]
