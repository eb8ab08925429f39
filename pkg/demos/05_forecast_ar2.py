"""One-step AR(2) forecasting through the frozen LM, against last-value persistence."""

from testembed.config import RunConfig
from testembed.pipeline import evaluate, split_dataset, train_phase1, train_phase2
from testembed.synthetic import make_ar2

SEED = 0
cfg = RunConfig(task="forecast", num_blocks=6, hidden_channels=32, lr=3e-3, queue_capacity=256, momentum=0.9,
                weight_feature=0.2, epochs_phase1=30, epochs_phase2=20, seed=SEED)
data = make_ar2(seed=SEED)
_, held = split_dataset(data, cfg)

ckpt = train_phase2(cfg, train_phase1(cfg, data), data)
rep = evaluate(ckpt, held)
print("test MSE %.3f  persistence MSE %.3f  ratio %.3f"
      % (rep["mse"], rep["persistence_mse"], rep["mse"] / rep["persistence_mse"]))
# the noise variance is 1, so no forecaster can go much below MSE 1
