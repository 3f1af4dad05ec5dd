"""perfcoach: a desk-scale query-based music performance coach.

Subsystems: audio frontend (``dsp``), masked-patch encoder (``encoder``),
query-transformer aligner (``aligner``), interleaved audio-text language
model (``lm``), instruction-tuning compiler (``compiler``), staged training
(``training``), objective/subjective evaluation (``metrics``, ``stats``,
``evaluation``), and the coaching/rating-study HTTP service (``service``).
"""

__version__ = "0.1.0"
