//! Renders a four-domain synthetic fundus dataset and prints what landed on
//! disk.
//!
//! ```text
//! cargo run --example generate_data -- /tmp/fundus
//! ```

use std::path::PathBuf;

use afnn::data::{channel_means, load_split, write_synthetic_dataset, Split};

fn main() -> afnn::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("afnn_example_data"));
    let manifests = write_synthetic_dataset(&root, 4, 24, 64, 7)?;
    println!("wrote {} manifests under {}", manifests.len(), root.display());

    for d in 0..4 {
        let train = load_split(&root, d, Split::Train)?;
        let test = load_split(&root, d, Split::Test)?;
        let [r, g, b] = channel_means(&train);
        let cup: f64 = train.iter().map(|s| s.oc.count() as f64 / s.od.count().max(1) as f64).sum::<f64>()
            / train.len() as f64;
        println!(
            "domain {d}: {:>2} train / {:>2} test, RGB means ({r:.3}, {g:.3}, {b:.3}), cup-to-disc area {cup:.2}",
            train.len(),
            test.len()
        );
    }
    Ok(())
}
