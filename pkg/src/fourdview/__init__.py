"""4D browsing engine: fuse synchronized multi-view video into browsable space-time.

Subpackages/modules:
    scene_io    -- scene directories, calibration, synthetic scene generation
    geometry    -- pinhole camera math, rectification, reprojection
    stereo      -- block-matching disparity for rectified pairs
    fusion      -- depth cost volumes, consensus foreground, static background
    compositor  -- self-supervised composition model + training
    editing     -- mask propagation, removal, disocclusion
    metrics     -- MSE / PSNR / SSIM and nearest-neighbour baselines
    service     -- HTTP render/edit service
    cli         -- command-line entry points
"""

__version__ = "0.1.0"
