import copy
import inspect
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

VERDICTS = ("PASS", "FAIL", "NO-ORBIT-FOUND", "ORBITS-FOUND")


class RunTracer:
    """Records the checks of one command run as numbered snapshots."""

    def __init__(self, track_callers: bool = True):
        """
        Args:
            track_callers: Whether to record the function that captured each check
        """
        self.snapshots: List[Any] = []
        self.metadata: List[Dict[str, Any]] = []
        self.current_step = 0
        self.track_callers = track_callers

    def _get_caller_info(self) -> Dict[str, Any]:
        if not self.track_callers:
            return {}
        frame = inspect.currentframe()
        try:
            frame = frame.f_back.f_back  # caller of capture
            return {"function": frame.f_code.co_name}
        finally:
            del frame

    def capture(self, data: Any, description: str = "", verdict: Optional[str] = None, **kwargs):
        """
        Capture the result of one check.

        Args:
            data: JSON-compatible result payload (deep-copied)
            description: what was checked
            verdict: one of VERDICTS, or None for informational entries
            **kwargs: additional metadata to store
        """
        if verdict is not None and verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        self.snapshots.append(copy.deepcopy(data))
        metadata = {
            "step": self.current_step,
            "description": description,
            "verdict": verdict,
            "timestamp": time.time(),
            **self._get_caller_info(),
            **kwargs,
        }
        self.metadata.append(metadata)
        self.current_step += 1

    def get_snapshot(self, step: int = -1) -> Tuple[Any, Dict]:
        """
        Args:
            step: The step number to retrieve (-1 for latest)

        Returns:
            Tuple of (snapshot data, metadata)
        """
        if not self.snapshots:
            return None, {}
        if step == -1:
            return self.snapshots[-1], self.metadata[-1]
        if 0 <= step < len(self.snapshots):
            return self.snapshots[step], self.metadata[step]
        return None, {}

    def verdicts(self) -> List[str]:
        return [m["verdict"] for m in self.metadata if m["verdict"] is not None]

    def checks(self) -> List[Dict[str, Any]]:
        """Snapshots merged with their step, description and verdict; timestamps are left out."""
        out = []
        for data, meta in zip(self.snapshots, self.metadata):
            entry = {"step": meta["step"], "description": meta["description"], "verdict": meta["verdict"]}
            entry["result"] = data
            out.append(entry)
        return out

    def reset(self):
        self.snapshots = []
        self.metadata = []
        self.current_step = 0

    def auto_trace(self, description: str) -> Callable:
        """
        Decorator capturing the return value of a check function.

        The wrapped function returns an object with ``to_dict()`` and an
        optional ``verdict`` attribute.
        """
        def decorate(func: Callable) -> Callable:
            def wrapper(*args, **kwargs):
                result = func(*args, **kwargs)
                payload = result.to_dict() if hasattr(result, "to_dict") else result
                self.capture(payload, description, getattr(result, "verdict", None), function=func.__name__)
                return result
            return wrapper
        return decorate
