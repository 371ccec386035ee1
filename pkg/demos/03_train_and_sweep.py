"""End-to-end, at a small budget: train a teacher, distill the slimmable
master, sweep accuracy against cost.

This uses 4000 training samples and two distillation epochs so it finishes
in a couple of CPU minutes; the wider submodels reach the teacher while the
quarter-width ones lag (train longer for the full effect — see README).
"""

import dataclasses
import time

from slimformer.data import generate_dataset
from slimformer.evaluation import evaluate, metrics_csv, run_sweep
from slimformer.presets import toy_dst_train_config, toy_model_config, toy_teacher_train_config
from slimformer.training import train_dst, train_teacher

train = generate_dataset(0, 4000, "train")
val = generate_dataset(0, 1000, "val")

print("training the teacher (full architecture, cross-entropy)...")
t0 = time.time()
teacher_cfg = dataclasses.replace(toy_teacher_train_config(), epochs=3, seed=0)
teacher = train_teacher(toy_model_config(), teacher_cfg, train)
print(f"  {time.time() - t0:.0f}s, val accuracy {evaluate(teacher, teacher.largest(), val):.3f}")

print("\ndistilling the slimmable master (sandwich sampling, k=4, frozen teacher)...")
t0 = time.time()
dst_cfg = dataclasses.replace(toy_dst_train_config(), epochs=2, seed=0)
log: list = []
dst = train_dst(teacher, dst_cfg, train, log)
print(f"  {time.time() - t0:.0f}s over {len(log)} iterations")
print(f"  every iteration trained {len(log[0]['omega'])} submodels, e.g. {log[0]['omega']}")

print("\naccuracy vs cost over the ten selected submodels:")
print(metrics_csv(run_sweep(dst, val, "val", seed=0)))
