"""Entity-level text-guided image editing at desk scale.

Two interchangeable generators (token-autoregressive and denoising
diffusion) behind a shared alignment phase, trained end-to-end on a
procedurally generated shapes corpus.
"""

__version__ = "0.1.0"
