"""Recurrent-network surrogates for aerodynamic and fuel-slosh loads on a pitch-plunge section."""

__version__ = "0.1.0"

from .core import (ChannelScaler, DataError, TimeSeriesDataset, fit_scaler, read_csv,  # noqa: E402
                   sample_windows, split_train_test, write_csv)
from .structure import MotionState, ModalIntegrator, StructuralParams  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["ChannelScaler", "DataError", "TimeSeriesDataset", "fit_scaler", "read_csv",
           "sample_windows", "split_train_test", "write_csv", "MotionState", "ModalIntegrator",
           "StructuralParams", "BACKEND", "__version__"]
