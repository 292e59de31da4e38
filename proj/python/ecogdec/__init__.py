"""Decoding auditory responses from multi-day ECoG recordings."""

from ._ecogdec import (
    BiquadCascade,
    ConfigError,
    DataError,
    FilterKind,
    NumericError,
    Recording,
    __version__,
    binomial_greater_p,
    confusion_matrix,
    decode,
    default_config,
    design_bandpass,
    design_butterworth,
    generate_dataset,
    generate_day,
    preprocess,
    read_dataset,
    relative_spectral_power,
    report,
    run_experiment,
    wilcoxon_ranksum,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
