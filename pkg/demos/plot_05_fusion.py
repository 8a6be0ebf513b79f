"""
Learning from prior detections
==============================

When past triplets come with known outcomes, the four detector outputs
can be combined by a trained classifier.  This uses a shrunken prior mix
(m = 10, 10 batches of 40 rows) so it runs in well under a minute.
"""

import pathlib
import tempfile

import numpy as np

from driftwatch.core import ScenarioSpec, sample_triplet
from driftwatch.detectors import OutputType, detector_outputs, fusion_configs
from driftwatch.fusion import (
    average_model,
    calibrate_threshold,
    classifier_detect,
    fusion_decide,
    load_model,
    save_model,
    table_from_outputs,
    train_classifier,
)
from driftwatch.harness import ExperimentConfig, generate_fusion_training

cfg = ExperimentConfig(m=10, fusion_n=10, fusion_k=40, base_seed=3,
                       scenarios={"nodrift": [0.0], "mean": [0.1, 0.2], "var": [1.2, 1.4]},
                       train_null=20, train_per_zeta=8)
outputs, labels = generate_fusion_training(cfg)
table = table_from_outputs(outputs, labels, OutputType.STATISTICS)
print(len(table), "prior detections,", int((labels == 0).sum()), "without drift")

model = train_classifier(table, "LR")
print("model:", model.name, "xi =", model.threshold)

###############################################################################
# Pick xi from fresh no-drift triplets so that about 5% of them fire.

detectors = fusion_configs(10, 40)
null = np.array([detector_outputs(sample_triplet(ScenarioSpec("nodrift", 0.0, 10), 400, rng=1000 + i),
                                  detectors, rng=i).features(model.output_type)
                 for i in range(40)])
model.threshold = calibrate_threshold(model, null, 0.05)
print("calibrated xi =", round(model.threshold, 3))

###############################################################################
# Apply the trained model and the plain p-value average to a new triplet.

new = sample_triplet(ScenarioSpec("var", 1.3, 10), 400, rng=99)
report = classifier_detect(model, new, detectors, rng=0)
print(report.detector, "drift =", report.drift_detected, "p_c =", round(report.statistic, 3))
p = detector_outputs(new, detectors, rng=0).p_values
print("AVG drift =", fusion_decide(average_model(), p), "mean p =", round(float(np.mean(p)), 3))

###############################################################################
# Models are plain JSON and reload exactly.

path = pathlib.Path(tempfile.mkdtemp()) / "lr_model.json"
save_model(model, path)
again = load_model(path)
print("reloaded decision matches:", classifier_detect(again, new, detectors, rng=0).drift_detected
      == report.drift_detected)
