//! Signal kernels shared by the analysis, augmentation and rendering code.

mod convolve;
mod filterbank;
mod frames;
mod shelf;

pub use convolve::fast_convolve;
pub use filterbank::{band_energies, Band, BandShape, FilterBank, PowerSpectrum};
pub(crate) use filterbank::sum_bands;
pub use frames::{frames, FrameSpec, Window};
pub(crate) use frames::fill_frame;
pub use shelf::{first_order_shelf, HighShelf};

/// `10 * log10(mean square + 1e-10)`: the energy floor sits at -100 dB.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Linear interpolated percentile (`q` in `[0, 1]`) of unsorted values.
pub(crate) fn percentile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub(crate) fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub(crate) fn gain_to_db(gain: f64) -> f64 {
    20.0 * gain.log10()
}
