"""Two-view mammogram classification with a hand-written autodiff core.

Modules
-------
tensor, optim, gradcheck   reverse-mode autodiff, Adam, finite-difference checks
dog                        difference-of-Gaussians filter bank
data, synth, imageio       case manifests, preprocessing, synthetic cases
models, checkpoint, train  backbones, parallel / multi-modal nets, training
dream                      class-directed input optimisation
evaluate, config, cli      metrics reports, run configs, command line
"""

__version__ = "0.1.0"
