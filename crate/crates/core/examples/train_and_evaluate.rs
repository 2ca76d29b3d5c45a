//! Leave-one-domain-out training: fit on three synthetic domains, score the
//! held-out one, save the checkpoint.
//!
//! The smoke preset finishes in seconds. Pass `desk` for the configuration
//! the acceptance thresholds were tuned on (a couple of minutes).
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- desk
//! ```

use afnn::data::{load_split, load_training_domains, write_synthetic_dataset, Split};
use afnn::metrics::{summarize, Connectivity};
use afnn::trainer::{evaluate, train, RunConfig};

fn main() -> afnn::Result<()> {
    let desk = std::env::args().nth(1).as_deref() == Some("desk");
    let (base, per_domain, size) = if desk {
        (RunConfig::desk(), 64, 64)
    } else {
        (RunConfig::smoke(), 12, 32)
    };
    let dir = std::env::temp_dir().join("afnn_example_lodo");
    let data = dir.join("data");
    write_synthetic_dataset(&data, 4, per_domain, size, 7)?;

    let cfg = RunConfig { unseen_domain: 0, ..base };
    let samples = load_training_domains(&data, cfg.unseen_domain)?;
    let out = train(&cfg, &samples)?;
    for h in &out.history {
        println!(
            "stage {} epoch {:>2}  seg {:.4}  rec {:.4}  cls {:.4}  val OD {:.3} OC {:.3}",
            h.stage, h.epoch, h.seg, h.rec, h.cls, h.val_dsc_od, h.val_dsc_oc
        );
    }

    let ckpt = dir.join("model.afnn");
    out.save(&ckpt)?;
    println!("checkpoint {} ({} parameters)", ckpt.display(), out.summary.parameters);

    let test = load_split(&data, cfg.unseen_domain, Split::Test)?;
    let records = evaluate(&out.params, &test, cfg.image_size, cfg.threshold, "example", Connectivity::Four)?;
    let s = summarize(&records);
    for (name, m) in [("OD", &s.disc), ("OC", &s.cup)] {
        let hd = m.hd.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        let asd = m.asd.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        println!("unseen domain {name}: DSC {:.4}  HD {hd}  ASD {asd}", m.dsc);
    }
    Ok(())
}
