//! How far apart the synthetic domains sit in intensity, before and after a
//! freshly initialized adaptor.

use afnn::cli::gap_stats;
use afnn::data::{write_synthetic_dataset, Split};

fn main() -> afnn::Result<()> {
    let data = std::env::temp_dir().join("afnn_example_gap");
    write_synthetic_dataset(&data, 4, 16, 64, 7)?;
    let (raw, adapted) = gap_stats(&data, None, false, Split::Train, 0)?;
    println!("domain  raw mean  adapted mean");
    for (r, a) in raw.domains.iter().zip(&adapted.domains) {
        println!("{:>6}  {:>8.4}  {:>12.4}", r.domain, r.mean_intensity, a.mean_intensity);
    }
    println!("gap {:.3e} -> {:.3e} (ratio {:.4})", raw.gap, adapted.gap, adapted.gap / raw.gap);
    Ok(())
}
