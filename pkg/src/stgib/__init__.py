"""Interpretable temporal graph regression.

Forecasts node time series on a static graph while extracting a sparse,
connected explanatory subgraph through information-bottleneck losses and a
learnable prototype bank.  Subpackages:

    data        dataset loading, windowing, pseudo-labels, synthetic planting
    encoder     compact graph/temporal-convolution backbone
    extractor   stochastic node gating, compression + connectivity losses
    prototypes  prototype bank, similarity features, alignment loss
    heads       regression / pseudo-class heads and their losses
    model       full forward pass producing outputs and loss terms
    training    loss weighting, optimization loop, gradient checks
    evaluation  forecast metrics, fidelity/sparsity, discrete MI oracles
    cli         train / eval / explain / synth / report commands
"""

__version__ = "0.1.0"
