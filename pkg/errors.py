from typing import Optional, Tuple


class NSVError(Exception):
    """Base class for every failure the harness reports."""


class ConfigError(NSVError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class SupportError(NSVError):
    pass


class CFLViolation(NSVError):
    def __init__(self, courant: float, limit: float = 1.0):
        self.courant = courant
        self.limit = limit
        super().__init__(f"CFL violation: max local Courant number {courant:.6g} > {limit:g}")


class SolverDivergence(NSVError):
    def __init__(self, iters: int, residual: float):
        self.iters = iters
        self.residual = residual
        super().__init__(f"Stokes solve did not converge after {iters} iterations (residual {residual:.3e})")


class NaNDetected(NSVError):
    def __init__(self, where: str, index: Optional[Tuple[int, ...]] = None, step: Optional[int] = None):
        self.where = where
        self.index = index
        self.step = step
        parts = [f"non-finite value in {where}"]
        if index is not None:
            parts.append(f"at cell {index}")
        if step is not None:
            parts.append(f"at step {step}")
        super().__init__(" ".join(parts))


class FitError(NSVError):
    def __init__(self, t: float, message: str):
        self.t = t
        super().__init__(f"{message} (t={t!r})")


class OracleError(NSVError):
    pass
