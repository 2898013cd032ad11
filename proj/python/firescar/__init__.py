from ._core import (
    ContractViolation,
    FormatError,
    MissingArtifact,
    bce_loss,
    build_dataset,
    commission,
    confusion,
    conventional_commission,
    deepest_width,
    default_grid,
    dice,
    filter_distant_components,
    make_crop,
    nbr,
    ndvi,
    omission,
    parameter_count,
    rdnbr,
    run_evaluate,
    run_preprocess,
    run_report,
    run_synth,
    run_train,
    unet_forward,
)
