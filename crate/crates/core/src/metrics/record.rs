//! Per-sample metric records, their CSV form, and aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "OD")]
    Disc,
    #[serde(rename = "OC")]
    Cup,
}

impl Structure {
    pub const ALL: [Structure; 2] = [Structure::Disc, Structure::Cup];

    pub fn label(self) -> &'static str {
        match self {
            Structure::Disc => "OD",
            Structure::Cup => "OC",
        }
    }
}

/// Metrics of one structure in one evaluated sample. `hd`/`asd` are `None`
/// when exactly one of the two masks has no surface.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub run_id: String,
    pub domain: usize,
    pub sample_id: String,
    pub structure: Structure,
    pub dsc: f64,
    pub hd: Option<f64>,
    pub asd: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    run_id: String,
    unseen_domain: usize,
    sample_id: String,
    structure: Structure,
    dsc: f64,
    hd: Option<f64>,
    asd: Option<f64>,
    hd_defined: u8,
}

pub fn write_csv<W: std::io::Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(Row {
            run_id: r.run_id.clone(),
            unseen_domain: r.domain,
            sample_id: r.sample_id.clone(),
            structure: r.structure,
            dsc: r.dsc,
            hd: r.hd,
            asd: r.asd,
            hd_defined: r.hd.is_some() as u8,
        })
        .map_err(|e| Error::invalid(format!("writing metrics csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<metrics csv>", e))
}

pub fn save_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), records)
}

pub fn load_csv(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        if (row.hd_defined == 1) != row.hd.is_some() {
            return Err(Error::format(
                path,
                format!("row {}: hd_defined disagrees with hd", i + 1),
            ));
        }
        out.push(MetricRecord {
            run_id: row.run_id,
            domain: row.unseen_domain,
            sample_id: row.sample_id,
            structure: row.structure,
            dsc: row.dsc,
            hd: row.hd,
            asd: row.asd,
        });
    }
    Ok(out)
}

/// Means over records of one structure. Distance means skip undefined
/// entries, which are counted in `undefined`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub samples: usize,
    pub dsc: f64,
    pub hd: Option<f64>,
    pub asd: Option<f64>,
    pub undefined: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "OD")]
    pub disc: StructureSummary,
    #[serde(rename = "OC")]
    pub cup: StructureSummary,
}

impl Summary {
    pub fn get(&self, s: Structure) -> &StructureSummary {
        match s {
            Structure::Disc => &self.disc,
            Structure::Cup => &self.cup,
        }
    }

    /// Mean of the two structures' DSC.
    pub fn mean_dsc(&self) -> f64 {
        0.5 * (self.disc.dsc + self.cup.dsc)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize_structure<'a>(records: impl Iterator<Item = &'a MetricRecord> + Clone) -> StructureSummary {
    StructureSummary {
        samples: records.clone().count(),
        dsc: mean(records.clone().map(|r| r.dsc)).unwrap_or(0.0),
        hd: mean(records.clone().filter_map(|r| r.hd)),
        asd: mean(records.clone().filter_map(|r| r.asd)),
        undefined: records.filter(|r| r.hd.is_none()).count(),
    }
}

pub fn summarize(records: &[MetricRecord]) -> Summary {
    let of = |s: Structure| summarize_structure(records.iter().filter(move |r| r.structure == s));
    Summary {
        disc: of(Structure::Disc),
        cup: of(Structure::Cup),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(structure: Structure, dsc: f64, hd: Option<f64>) -> MetricRecord {
        MetricRecord {
            run_id: "r".into(),
            domain: 1,
            sample_id: "s".into(),
            structure,
            dsc,
            hd,
            asd: hd.map(|v| v / 2.0),
        }
    }

    #[test]
    fn csv_round_trip_keeps_sentinels() {
        let recs = vec![
            rec(Structure::Disc, 0.9, Some(1.5)),
            rec(Structure::Cup, 0.0, None),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("run_id,unseen_domain,sample_id,structure,dsc,hd,asd,hd_defined"));
        assert!(text.contains("r,1,s,OC,0.0,,,0"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_csv(&path, &recs).unwrap();
        assert_eq!(load_csv(&path).unwrap(), recs);
    }

    #[test]
    fn summary_skips_undefined_distances() {
        let recs = vec![
            rec(Structure::Cup, 0.5, Some(2.0)),
            rec(Structure::Cup, 0.7, None),
            rec(Structure::Disc, 1.0, Some(0.0)),
        ];
        let s = summarize(&recs);
        assert_eq!(s.cup.samples, 2);
        assert!((s.cup.dsc - 0.6).abs() < 1e-15);
        assert_eq!(s.cup.hd, Some(2.0));
        assert_eq!(s.cup.undefined, 1);
        assert_eq!(s.disc.hd, Some(0.0));
    }
}
