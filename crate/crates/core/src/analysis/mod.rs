//! Spectrum and connectivity diagnostics.

mod connectivity;
mod spectrum;
mod svd;

pub use connectivity::{
    connection_map_export, connection_map_import, connectivity_stats, ConnectivityReport, GateCounts,
};
pub use spectrum::{spectrum_scan, Histogram, ScanOptions, SpectrumEntry, SpectrumReport, SpectrumSummary};
pub use svd::{svd_small, Svd, SVD_MAX_DIM};
