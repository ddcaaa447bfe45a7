"""
Phones, durations and masks
===========================

A forced alignment reports phones with positive durations.  Word boundaries
without a pause get a zero-length silence, phones get a word-position suffix,
and a phone-level mask expands to frames by repetition.
"""

import numpy as np

from flowfill.sequence import SIL, build_context, insert_ghost_silence, phone_span_mask, word_position_postfix

# three words; the aligner found no pause between the second and third
words = [["A", "B"], ["C"], ["D", "E", "F"]]
aligned = [SIL, "A", "B", SIL, "C", "D", "E", "F", SIL]
durations = [1, 1, 2, 1, 1, 3, 2, 1, 2]

ali = insert_ghost_silence(aligned, durations, words)
print("phones   ", ali.y)
print("durations", ali.l.tolist())
print("suffixed ", word_position_postfix(ali.y, ali.words))
print("frames   ", ali.z())

# mask the last word and zero its frames in the context
start, end = ali.word_spans()[-1]
mask = phone_span_mask(ali.l, start, end)
x = np.arange(ali.num_frames, dtype=float)[:, None] + 1
print("frame mask", mask.m.tolist())
print("context   ", build_context(x, mask.m)[:, 0].tolist())
