//! Trains the full model and each single-module ablation on the same fold
//! and prints the module/score matrix. Uses the smoke preset so it runs in
//! under a minute; swap in `RunConfig::desk()` for meaningful numbers.

use afnn::data::{load_split, load_training_domains, write_synthetic_dataset, Split};
use afnn::metrics::Connectivity;
use afnn::report::{ablation_table, Variant};
use afnn::trainer::{evaluate, train, RunConfig};

fn main() -> afnn::Result<()> {
    let data = std::env::temp_dir().join("afnn_example_ablation");
    write_synthetic_dataset(&data, 4, 12, 32, 7)?;
    let base = RunConfig { unseen_domain: 2, ..RunConfig::smoke() };
    let samples = load_training_domains(&data, base.unseen_domain)?;
    let test = load_split(&data, base.unseen_domain, Split::Test)?;

    let mut records = Vec::new();
    for v in Variant::ALL {
        let cfg = RunConfig { model: v.apply(&base.model), ..base.clone() };
        let out = train(&cfg, &samples)?;
        let run_id = format!("{}@seed{}", v.name(), cfg.seed);
        records.extend(evaluate(&out.params, &test, cfg.image_size, cfg.threshold, &run_id, Connectivity::Four)?);
        println!("trained {:<13} {} parameters", v.name(), out.summary.parameters);
    }
    println!();
    print!("{}", ablation_table(&records)?);
    Ok(())
}
