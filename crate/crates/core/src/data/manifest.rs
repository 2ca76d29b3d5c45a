use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::{read_pgm, read_ppm, write_pgm, write_ppm};
use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// File paths are relative to the manifest's directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub od: PathBuf,
    pub oc: PathBuf,
    pub domain: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Loads every sample listed in a manifest; images scaled to [0, 1].
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<Sample>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let image_path = root.join(&e.image);
            let wrap = |err: Error| Error::DatasetEntry {
                index,
                path: image_path.clone(),
                detail: err.to_string(),
            };
            let image = read_ppm(&image_path).map_err(wrap)?;
            let od = read_pgm(&root.join(&e.od)).map_err(wrap)?;
            let oc = read_pgm(&root.join(&e.oc)).map_err(wrap)?;
            let id = e
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("{index}"));
            Sample::new(id, image, od, oc, e.domain).map_err(wrap)
        })
        .collect()
}

/// Writes samples as `images/<id>.ppm`, `masks/<id>_od.pgm`,
/// `masks/<id>_oc.pgm` plus `manifest.json` under `dir`.
pub fn save_split(dir: &Path, name: &str, split: Split, samples: &[Sample]) -> Result<PathBuf> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image = PathBuf::from("images").join(format!("{}.ppm", s.id));
        let od = PathBuf::from("masks").join(format!("{}_od.pgm", s.id));
        let oc = PathBuf::from("masks").join(format!("{}_oc.pgm", s.id));
        write_ppm(&dir.join(&image), &s.image)?;
        write_pgm(&dir.join(&od), &s.od)?;
        write_pgm(&dir.join(&oc), &s.oc)?;
        entries.push(ManifestEntry {
            image,
            od,
            oc,
            domain: s.domain,
        });
    }
    let path = dir.join("manifest.json");
    DatasetManifest {
        name: name.to_string(),
        split,
        entries,
    }
    .save(&path)?;
    Ok(path)
}
