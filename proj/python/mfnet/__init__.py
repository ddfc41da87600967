"""Speech enhancement on real-valued short-time DCT spectra.

Thin Python layer over the C++ engine: the STDCT transform, the MFNet
encoder-decoder model, SNR-exact mixing, losses, metrics, and the
deterministic toy trainer.
"""

from ._mfnet import (
    Model,
    ModelConfig,
    TrainConfig,
    __version__,
    count_params_and_macs,
    dct2,
    gradcheck_op_names,
    idct2,
    istdct,
    load_checkpoint,
    loss_abs,
    loss_mfnet,
    loss_polar,
    lr_schedule,
    mix_at_snr,
    run_gradcheck,
    run_gradcheck_all,
    si_sdr_db,
    snr_db,
    stdct,
    stdct_frame_count,
    train_on_pairs,
)

__all__ = [
    "Model",
    "ModelConfig",
    "TrainConfig",
    "__version__",
    "count_params_and_macs",
    "dct2",
    "gradcheck_op_names",
    "idct2",
    "istdct",
    "load_checkpoint",
    "loss_abs",
    "loss_mfnet",
    "loss_polar",
    "lr_schedule",
    "mix_at_snr",
    "run_gradcheck",
    "run_gradcheck_all",
    "si_sdr_db",
    "snr_db",
    "stdct",
    "stdct_frame_count",
    "train_on_pairs",
]
