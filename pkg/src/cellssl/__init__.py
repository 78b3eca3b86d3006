"""Self-supervised learning on 2-dimensional cellular complexes.

Lifts graphs to cellular complexes by gluing 2-cells onto induced cycles,
runs four-neighborhood message passing over the cells, pretrains with a
parameter-perturbation contrastive objective, and learns a per-2-cell
trimming gate through bi-level meta-optimization.  A cellular color
refinement engine is included for expressiveness comparisons against the
plain Weisfeiler-Lehman test.
"""

__version__ = "0.1.0"
