"""
Timer Utilities Module

Monotonic timing helpers used by training, evaluation and the latency bench,
plus the hardware context block embedded in reports.
"""
import platform
import time
from typing import Any, Callable, Dict, Tuple

import psutil


def time_function(func: Callable, *args, **kwargs) -> Tuple[Any, float]:
    """
    Measure the wall time of a single call on the monotonic clock.

    Args:
        func: The function to time
        *args: Arguments to pass to the function
        **kwargs: Keyword arguments to pass to the function

    Returns:
        Tuple of (function result, execution time in seconds)
    """
    start_time = time.perf_counter()
    result = func(*args, **kwargs)
    end_time = time.perf_counter()

    return result, end_time - start_time


def get_system_info() -> Dict[str, str]:
    """
    Get system hardware information for benchmarking context.

    Returns:
        Dictionary with CPU, core count, RAM, OS and Python information
    """
    try:
        cpu_info = platform.processor() or platform.machine() or "Unknown CPU"
        ram_gb = round(psutil.virtual_memory().total / (1024**3), 2)
        cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 0

        return {
            "cpu": cpu_info,
            "cores": str(cores),
            "ram": f"{ram_gb}GB",
            "os": f"{platform.system()} {platform.release()}",
            "python": platform.python_version(),
        }
    except Exception:
        return {
            "cpu": "Error getting CPU info",
            "cores": "?",
            "ram": "Error getting RAM info",
            "os": f"{platform.system()} {platform.release()}",
            "python": platform.python_version(),
        }


def format_system_info(system_info: Dict[str, str]) -> str:
    """One-line hardware summary used in report footers."""
    return (f"CPU: {system_info['cpu']} ({system_info['cores']} cores) | "
            f"RAM: {system_info['ram']} | OS: {system_info['os']} | "
            f"Python {system_info['python']}")


def format_time(seconds: float) -> str:
    """
    Format a time duration in a human-readable format.

    Args:
        seconds: Time in seconds

    Returns:
        Formatted time string
    """
    if seconds < 0.001:
        return f"{seconds * 1_000_000:.2f} μs"
    elif seconds < 1:
        return f"{seconds * 1_000:.2f} ms"
    elif seconds < 60:
        return f"{seconds:.4f} s"
    elif seconds < 3600:
        return f"{seconds / 60:.2f} min"
    else:
        return f"{seconds / 3600:.2f} hours"
