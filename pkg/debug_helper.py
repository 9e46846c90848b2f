import csv
import logging
import os
import time
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class DebugHelper:
    """
    Helper class for tracing solver runs.
    """

    def __init__(self, enable_debug: bool = True, debug_dir: str = "debug", progress_every: int = 500):
        """
        Initialize debug helper.

        Args:
            enable_debug (bool): Whether failing states are dumped to disk
            debug_dir (str): Folder for state dumps
            progress_every (int): Step stride for progress messages
        """
        self.enable_debug = enable_debug
        self.debug_dir = debug_dir
        self.progress_every = max(1, int(progress_every))
        self.logger = logging.getLogger(__name__)

    def log_solve_start(self, label: str, n_elems: int, t_final: float, u0_sup: float):
        """
        Log the start of a solve.

        Args:
            label (str): Viscosity kind / case description
            n_elems (int): Number of elements
            t_final (float): Final time
            u0_sup (float): U0 of the projected initial data
        """
        self.logger.info(f"SOLVE START: {label} N={n_elems} T={t_final} U0={u0_sup:.6g}")

    def log_progress(self, step: int, t: float, dt: float, max_abs_u: float):
        """Log solver progress every progress_every steps."""
        if step % self.progress_every == 0:
            self.logger.debug(f"STEP {step}: t={t:.6f} dt={dt:.3e} max|u|={max_abs_u:.6g}")

    def log_solve_end(self, label: str, n_steps: int, elapsed: float):
        self.logger.info(f"SOLVE DONE: {label} in {n_steps} steps ({elapsed:.2f}s)")

    def log_step_failure(self, step: int, t: float, node: int, message: str):
        """
        Log a failed time step.

        Args:
            step (int): Step counter
            t (float): Time at the start of the step
            node (int): First node with a non-finite value
            message (str): Failure description
        """
        self.logger.error(f"STEP FAILED: step {step} at t={t:.6f}, node {node}: {message}")

    def save_debug_state(self, values: np.ndarray, label: str) -> Optional[str]:
        """
        Save nodal values for post-mortem inspection.

        Args:
            values (np.ndarray): Nodal values
            label (str): Short description used in the file name

        Returns:
            Optional[str]: Path of the dump, or None when disabled or failed
        """
        if not self.enable_debug:
            return None

        try:
            os.makedirs(self.debug_dir, exist_ok=True)
            safe_label = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)
            filename = os.path.join(self.debug_dir, f"state_{safe_label}_{int(time.time())}.csv")
            n = len(values)
            with open(filename, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["x", "u"])
                for i, value in enumerate(values):
                    writer.writerow([repr(i / n), repr(float(value))])
            self.logger.debug(f"Debug state saved: {filename}")
            return filename
        except OSError as e:
            self.logger.warning(f"Failed to save debug state: {e}")
            return None


# Global debug instance
debug = DebugHelper(enable_debug=True)
