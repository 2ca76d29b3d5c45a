//! Segmentation quality metrics and domain-gap statistics.

mod distance;
mod gap;
mod mask;
mod record;

pub use distance::{asd, dsc, hausdorff, surface, Connectivity};
pub use gap::{domain_gap_stats, DomainStats, GapReport, Histogram, HISTOGRAM_BINS};
pub use mask::BinaryMask;
pub use record::{
    load_csv, save_csv, summarize, summarize_structure, write_csv, MetricRecord, Structure,
    StructureSummary, Summary,
};
