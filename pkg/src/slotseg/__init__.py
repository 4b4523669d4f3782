"""Object-centric prompted segmentation with target-domain self-training.

Slot representations are learned by reconstructing frozen encoder features,
condensed into an object token injected into a promptable two-way mask
decoder, and adapted to a shifted domain with an anchor/student/teacher
triad and bootstrap parameter copying. Pure numpy throughout; the pixel
kernels optionally run under numba (SLOTSEG_NUMBA=0 disables).
"""

__version__ = "0.1.0"
