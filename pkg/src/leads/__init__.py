"""Learning dynamics across environments with a shared-plus-residual split.

Subpackages and modules:

* ``autodiff`` — reverse-mode AD over dense tensors, Adam, power iteration.
* ``kernels`` — compiled/numpy numeric cores, selected at import.
* ``systems`` — ground-truth dynamics, sampling, dataset generation.
* ``integrators`` — fixed-step and adaptive solvers, differentiable rollout.
* ``models`` — decomposed MLP / ConvNet / linear-map hypotheses.
* ``training`` — objectives, baselines, novel-environment adaptation.
* ``theory`` — closed-form optimum and generalization-bound calculators.
* ``io``, ``sweep``, ``cli`` — file formats, grouping protocol, entry point.
"""

__version__ = "0.1.0"
