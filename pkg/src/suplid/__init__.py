"""SupLID: superpixel-level LID guidance for pixel-wise OOD detection.

The pipeline operates on pre-extracted tensors (features, logits, masks)
and is organized as:

    tensorio    -- SLTF binary tensor format, PPM/PGM ingestion
    superpixel  -- SLIC segmentation with connectivity enforcement
    lid         -- exact kNN search and the MLE LID estimator
    coreset     -- per-class geometrical coreset selection
    scores      -- confidence, guidance and fused OOD score maps
    metrics     -- pixel-pooled AUROC / AUPR / FPR@95 / best-F1
    synth       -- synthetic fixtures with known intrinsic dimension
    cli         -- subcommand orchestration

Hot kernels (SLIC assignment, brute-force kNN) are numba-jitted with
pure-numpy fallbacks; set SUPLID_NO_NUMBA=1 to force the fallbacks.
"""

__version__ = "0.1.0"
