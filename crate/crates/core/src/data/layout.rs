//! On-disk dataset tree: `<root>/domain_<d>/<split>/manifest.json`.

use std::path::{Path, PathBuf};

use super::manifest::{load_dataset, save_split, Split};
use super::synth::{generate_domain, DomainSpec};
use super::Sample;
use crate::error::{Error, Result};

/// Share of each domain's samples written to the train split.
pub const TRAIN_FRACTION: f64 = 0.8;

pub fn split_dir(root: &Path, domain: usize, split: Split) -> PathBuf {
    root.join(format!("domain_{domain}")).join(split.as_str())
}

pub fn manifest_path(root: &Path, domain: usize, split: Split) -> PathBuf {
    split_dir(root, domain, split).join("manifest.json")
}

/// Domain ids present under `root`, ascending.
pub fn list_domains(root: &Path) -> Result<Vec<usize>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut domains = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        if let Some(d) = name.to_str().and_then(|n| n.strip_prefix("domain_")).and_then(|d| d.parse().ok()) {
            domains.push(d);
        }
    }
    domains.sort_unstable();
    Ok(domains)
}

pub fn load_split(root: &Path, domain: usize, split: Split) -> Result<Vec<Sample>> {
    load_dataset(&manifest_path(root, domain, split))
}

/// Train splits of every domain under `root` except `unseen`.
pub fn load_training_domains(root: &Path, unseen: usize) -> Result<Vec<Sample>> {
    let domains = list_domains(root)?;
    if !domains.contains(&unseen) {
        return Err(Error::Config(format!(
            "unseen domain {unseen} not found under {} (domains: {domains:?})",
            root.display()
        )));
    }
    let train: Vec<usize> = domains.into_iter().filter(|&d| d != unseen).collect();
    if train.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two training domains besides {unseen}, found {train:?}"
        )));
    }
    let mut samples = Vec::new();
    for d in train {
        samples.extend(load_split(root, d, Split::Train)?);
    }
    Ok(samples)
}

/// Splits one domain's samples: the first `⌊0.8·n⌋` train, the rest test.
pub fn train_test_split(samples: Vec<Sample>) -> (Vec<Sample>, Vec<Sample>) {
    let n_train = (samples.len() as f64 * TRAIN_FRACTION).floor() as usize;
    let mut train = samples;
    let test = train.split_off(n_train);
    (train, test)
}

/// Renders `domains` preset domains of `per_domain` samples each and writes
/// their train/test splits under `root`. Returns the manifest paths.
pub fn write_synthetic_dataset(
    root: &Path,
    domains: usize,
    per_domain: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    if domains == 0 {
        return Err(Error::Config("--domains must be at least 1".into()));
    }
    if per_domain == 0 {
        return Err(Error::Config("--per-domain must be at least 1".into()));
    }
    let mut written = Vec::new();
    for d in 0..domains {
        let samples = generate_domain(&DomainSpec::preset(d, seed), d, per_domain, size)?;
        let (train, test) = train_test_split(samples);
        for (split, part) in [(Split::Train, train), (Split::Test, test)] {
            let name = format!("synthetic_domain_{d}");
            written.push(save_split(&split_dir(root, d, split), &name, split, &part)?);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_round_trips_and_splits_eighty_twenty() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_synthetic_dataset(dir.path(), 3, 10, 32, 5).unwrap();
        assert_eq!(paths.len(), 6);
        assert_eq!(list_domains(dir.path()).unwrap(), vec![0, 1, 2]);
        assert_eq!(load_split(dir.path(), 1, Split::Train).unwrap().len(), 8);
        assert_eq!(load_split(dir.path(), 1, Split::Test).unwrap().len(), 2);
        let train = load_training_domains(dir.path(), 0).unwrap();
        assert_eq!(train.len(), 16);
        assert!(train.iter().all(|s| s.domain != 0));
        assert!(matches!(load_training_domains(dir.path(), 7), Err(Error::Config(_))));
        assert!(matches!(
            write_synthetic_dataset(dir.path(), 2, 0, 32, 5),
            Err(Error::Config(_))
        ));
    }
}
