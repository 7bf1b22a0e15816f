//! Power-unit conversions and small geometry helpers.

use crate::float;

/// Convert a power level from dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    float::powf(10.0, dbm / 10.0)
}

/// Convert a power level from milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * float::log10(mw)
}

/// Convert a linear ratio to decibels.
pub fn ratio_to_db(ratio: f64) -> f64 {
    10.0 * float::log10(ratio)
}

/// Convert decibels to a linear ratio.
pub fn db_to_ratio(db: f64) -> f64 {
    float::powf(10.0, db / 10.0)
}

/// Euclidean distance between two planar points in meters.
pub fn distance_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    float::sqrt(dx * dx + dy * dy)
}
