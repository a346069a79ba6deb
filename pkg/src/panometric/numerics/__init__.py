from .autodiff import Tape, Var, grad_check, stop_gradient
from .linalg import ConvergenceError, matrix_sqrt_psd, sym_eigen

__all__ = ["Tape", "Var", "grad_check", "stop_gradient", "ConvergenceError",
           "matrix_sqrt_psd", "sym_eigen"]
