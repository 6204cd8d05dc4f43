"""gazefuse: streaming fusion of eye tracking, ECG and object detections.

Live sensor streams arrive over a newline-delimited wire protocol, run
through physiological pipelines (pupil filtering, HRV windows) and a
gaze-to-object fusion stage, and are recorded to a replayable session log
driven by a five-task study protocol. See the README for the CLI surface.
"""

from .errors import GazefuseError

__version__ = "0.1.0"

__all__ = ["GazefuseError", "__version__"]
