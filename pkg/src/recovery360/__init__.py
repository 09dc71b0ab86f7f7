"""Ball-recovery probability models on event data with 360 freeze frames.

Two gradient-boosted classifiers estimate whether the defending team wins
the ball back within the next ``k`` actions: one from the action stream
only, one that adds pitch-control features of the current freeze frame.
Their difference per action (DDI) measures what the defenders' positioning
adds.
"""

__version__ = "0.1.0"
