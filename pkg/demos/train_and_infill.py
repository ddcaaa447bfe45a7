"""
Train a small infilling model and run every task
================================================

Generates toy speech, trains the audio and duration models for a few hundred
steps, then runs zero-shot TTS, style transfer, denoising, editing, sampling
and style shuffling.  Pass a step count to train longer, e.g.

    python demos/train_and_infill.py 1500
"""

import sys
import time

import numpy as np

from flowfill.duration import DurationModel
from flowfill.evaluation import tts_trials
from flowfill.metrics import PhoneRecognizer, style_similarity
from flowfill.network import FieldNet, NetConfig
from flowfill.ode import SolverConfig
from flowfill.synth import ToyProcessSpec, bare_words, generate_dataset
from flowfill.tasks import EditSpec, Infiller, TaskRequest, corrupt_span
from flowfill.training import TrainConfig, train_audio, train_duration

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 400

train = generate_dataset(ToyProcessSpec(), 2000, seed=3)
test = generate_dataset(ToyProcessSpec(), 64, seed=99, normalizer=train.normalizer)
print(f"{len(train)} training utterances, {sum(r.num_frames for r in train.records)} frames")

t0 = time.perf_counter()
audio = FieldNet(NetConfig(vocab=train.phones.size), seed=0)
log = train_audio(audio, train, TrainConfig(steps=steps, lr=1e-3, warmup=100))
duration = DurationModel.create("regression", train.phones.size, seed=1)
train_duration(duration, train, TrainConfig(steps=300, lr=1e-3, warmup=30))
print(f"audio loss {log.losses[0]:.3f} -> {log.losses[-1]:.3f} in {time.perf_counter() - t0:.0f} s")

infiller = Infiller(audio, duration, train.phones, solver=SolverConfig(step_size=0.125))
recognizer = PhoneRecognizer(train.process, train.normalizer)
ref, other = test[0], test[1]

# zero-shot TTS over a batch of prompts
trials = tts_trials(infiller, test, 32)
print(f"TTS: prompt wins {trials.win_rate:.0%}, phone error {trials.phone_error_rate:.1%}")

# every task on the same reference
requests = [
    TaskRequest("style_transfer", reference_x=ref.x, reference=ref.alignment, target_z=other.frame_ids(train.phones)),
    TaskRequest("denoise", reference_x=corrupt_span(ref.x, (20, 50), 0.0, seed=0), reference=ref.alignment, noise_span=(20, 50)),
    TaskRequest("edit", reference_x=ref.x, reference=ref.alignment, edit=EditSpec.for_words(ref.alignment, 0, 0, [["A", "B", "C"]])),
    TaskRequest("sample", target_text=bare_words(other.alignment), seed=1),
    TaskRequest("style_shuffle", target_z=other.frame_ids(train.phones), seed=2),
]
for req, res in zip(requests, infiller.run(requests)):
    sim = style_similarity(res.x, ref.x)
    print(f"{req.kind:>14s}: {len(res.x):3d} frames, phone error {recognizer.error_rate(res.x, res.z):.1%}, style sim to ref {sim:+.2f}")

print("style sims of shuffled samples:", np.round([style_similarity(r.x, ref.x) for r in infiller.run(
    [TaskRequest("style_shuffle", target_z=ref.frame_ids(train.phones), seed=s) for s in range(4)])], 2))
