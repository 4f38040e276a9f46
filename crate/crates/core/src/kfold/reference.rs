//! Published loss tables for the two protocols at 15,000 indices, used as
//! fixtures for the averaging and comparison arithmetic.

use super::summary::{LossSummary, UnitKind};

/// Per-epoch (train, validation) losses of the 80/20 baseline, epochs 1..=20.
pub const BASELINE_EPOCH_LOSSES: [(f64, f64); 20] = [
    (1.87382, 0.58396),
    (0.46677, 0.45976),
    (0.32406, 0.48057),
    (0.27361, 0.55539),
    (0.24153, 0.51188),
    (0.22168, 0.56281),
    (0.21086, 0.53505),
    (0.20035, 0.56998),
    (0.19437, 0.59583),
    (0.18695, 0.58485),
    (0.18185, 0.65605),
    (0.17765, 0.58455),
    (0.17289, 0.66382),
    (0.17167, 0.64183),
    (0.16750, 0.65485),
    (0.16447, 0.72675),
    (0.16218, 0.63886),
    (0.16171, 0.67435),
    (0.15876, 0.64022),
    (0.15666, 0.61153),
];

/// Reported overall row of the baseline table.
pub const BASELINE_OVERALL: (f64, f64) = (0.293467, 0.5966445);

/// Per-fold (train, validation) losses of the 5-fold run, folds 1..=5.
pub const KFCV_FOLD_LOSSES: [(f64, f64); 5] = [
    (0.32908, 0.27480),
    (0.27029, 0.25325),
    (0.25590, 0.26972),
    (0.24714, 0.31040),
    (0.24494, 0.28471),
];

/// Reported overall row of the k-fold table (validation rounded to 5 places).
pub const KFCV_OVERALL: (f64, f64) = (0.26947, 0.27858);

/// Reported relative improvement in validation loss, percent.
pub const REPORTED_IMPROVEMENT_PERCENT: f64 = 53.31;

pub fn baseline_summary() -> LossSummary {
    LossSummary::from_pairs(UnitKind::Epoch, 1, &BASELINE_EPOCH_LOSSES).expect("fixture is valid")
}

/// Fold records numbered from 0, matching the `fold_<i>` directory layout.
pub fn kfcv_summary() -> LossSummary {
    LossSummary::from_pairs(UnitKind::Fold, 0, &KFCV_FOLD_LOSSES).expect("fixture is valid")
}
