"""pcup — patch-based point-cloud upsampling.

An adversarially trained upsampler for 3D point clouds, built on a
small self-contained reverse-mode autodiff engine: geodesic patch
extraction from meshes, an up-down-up feature-expansion generator with
self-attention, a compound adversarial / reconstruction / uniformity
loss, and a full evaluation metric suite (Chamfer, Hausdorff, earth
mover's distance, point-to-surface, uniformity).
"""

__version__ = "0.1.0"
