# Quantization-aware fine-tuning on the toy regression model.  Cluster
# assignments freeze at quantization time; training moves only the codebook
# centroids (each one follows the average gradient of its member weights, at
# 10x the base learning rate) plus the full-precision biases.

from cbquant import QuantConfig, Scheme
from cbquant.training import TrainConfig, curve_records, run_experiment

train_cfg = TrainConfig(base_learning_rate=0.02, epochs=200, batch_size=64,
                        quantized_lr_multiplier=10.0, data_seed=2)
quant_cfg = QuantConfig(scheme=Scheme.KMEANS, bits=1, max_iterations=3, seed=0)

result = run_experiment(train_cfg, quant_cfg, task_seed=2, hidden_dim=16)

print(f"full-precision loss: {result.pretrain_loss:.5f}\n")
for name in ("LINEAR", "KMEANS"):
    arm = result.arms[name]
    print(f"{name.lower():>7}: after 1-bit quantization {arm.post_quant_loss:.5f} "
          f"-> after fine-tuning {arm.final_loss:.5f} "
          f"(recovered {100 * result.recovery(Scheme[name]):.0f}% of the jump)")

print("\nlearning-curve records (epoch,scheme,bits,seed,loss):")
lines = curve_records(result)
for line in lines[:3] + ["..."] + lines[-3:]:
    print(" ", line)
