//! Markdown summaries of metric records: one table per metric with a column
//! per unseen domain plus the average, and an ablation table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{summarize_structure, MetricRecord, Structure};
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Dsc,
    Hd,
    Asd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Dsc, Metric::Hd, Metric::Asd];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Dsc => "DSC",
            Metric::Hd => "HD",
            Metric::Asd => "ASD",
        }
    }

    fn higher_is_better(self) -> bool {
        self == Metric::Dsc
    }
}

/// The method a record belongs to: its run id up to the first `@`, so
/// `full@seed1` and `full@seed2` pool into `full`.
pub fn method_of(run_id: &str) -> &str {
    run_id.split('@').next().unwrap_or(run_id)
}

/// Mean of one metric over the records of a (method, domain, structure)
/// cell. Undefined distances are skipped; `None` when nothing is defined.
fn cell(records: &[&MetricRecord], structure: Structure, metric: Metric) -> Option<f64> {
    let s = summarize_structure(records.iter().copied().filter(|r| r.structure == structure));
    match metric {
        Metric::Dsc => (s.samples > 0).then_some(s.dsc),
        Metric::Hd => s.hd,
        Metric::Asd => s.asd,
    }
}

/// method → unseen domain → records, in sorted order.
type Grouped<'a> = BTreeMap<&'a str, BTreeMap<usize, Vec<&'a MetricRecord>>>;

fn group(records: &[MetricRecord]) -> Grouped<'_> {
    let mut g: Grouped<'_> = BTreeMap::new();
    for r in records {
        g.entry(method_of(&r.run_id)).or_default().entry(r.domain).or_default().push(r);
    }
    g
}

fn fmt_value(v: Option<f64>, metric: Metric) -> String {
    match v {
        Some(x) if metric == Metric::Dsc => format!("{x:.4}"),
        Some(x) => format!("{x:.3}"),
        None => "n/a".into(),
    }
}

/// Pads every column to its widest cell.
fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (c, w) in cells.iter().zip(&width) {
            let _ = write!(s, " {c:<w$} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push('|');
    for w in &width {
        let _ = write!(out, "{}|", "-".repeat(w + 2));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// One metric for both structures: a row per method, a column per unseen
/// domain and an `Avg.` column (unweighted mean of the domain columns)
/// for each structure.
pub fn metric_table(records: &[MetricRecord], metric: Metric) -> String {
    let groups = group(records);
    let mut domains: Vec<usize> = records.iter().map(|r| r.domain).collect();
    domains.sort_unstable();
    domains.dedup();
    let mut header = vec!["Method".to_string()];
    for s in Structure::ALL {
        for d in &domains {
            header.push(format!("{} D{d}", s.label()));
        }
        header.push(format!("{} Avg.", s.label()));
    }
    let rows: Vec<Vec<String>> = groups
        .iter()
        .map(|(method, by_domain)| {
            let mut row = vec![method.to_string()];
            for s in Structure::ALL {
                let vals: Vec<Option<f64>> = domains
                    .iter()
                    .map(|d| by_domain.get(d).and_then(|rs| cell(rs, s, metric)))
                    .collect();
                row.extend(vals.iter().map(|&v| fmt_value(v, metric)));
                let avg = vals
                    .iter()
                    .map(|v| v.ok_or(()))
                    .collect::<std::result::Result<Vec<f64>, ()>>()
                    .ok()
                    .filter(|v| !v.is_empty())
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64);
                row.push(fmt_value(avg, metric));
            }
            row
        })
        .collect();
    render_table(&header, &rows)
}

/// DSC, HD and ASD tables plus a count of undefined distances.
pub fn render_report(records: &[MetricRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::invalid("no metric records to report"));
    }
    let mut out = String::from("# Segmentation results\n");
    for m in Metric::ALL {
        let dir = if m.higher_is_better() { "higher is better" } else { "lower is better" };
        let _ = write!(out, "\n## {} ({dir})\n\n{}", m.label(), metric_table(records, m));
    }
    let undefined = records.iter().filter(|r| r.hd.is_none()).count();
    let _ = writeln!(
        out,
        "\n{} records; {undefined} with an undefined distance (exactly one mask empty) excluded from HD/ASD means.",
        records.len()
    );
    Ok(out)
}

/// One row of the ablation matrix: the full model or one module disabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoAdaptor,
    NoFusion,
    NoMultitask,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoAdaptor, Variant::NoFusion, Variant::NoMultitask];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAdaptor => "no_adaptor",
            Variant::NoFusion => "no_fusion",
            Variant::NoMultitask => "no_multitask",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }

    /// (adaptor, fusion, multitask) switches.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Full => (true, true, true),
            Variant::NoAdaptor => (false, true, true),
            Variant::NoFusion => (true, false, true),
            Variant::NoMultitask => (true, true, false),
        }
    }

    /// `base` with this variant's modules switched off.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let (a, f, m) = self.flags();
        ModelConfig {
            use_adaptor: a,
            use_fusion: f,
            use_multitask: m,
            ..base.clone()
        }
    }
}

/// Mean DSC of one structure over every record of a method.
pub fn method_dsc(records: &[MetricRecord], method: &str, structure: Structure) -> Option<f64> {
    let rs: Vec<&MetricRecord> = records.iter().filter(|r| method_of(&r.run_id) == method).collect();
    cell(&rs, structure, Metric::Dsc)
}

/// Module switches against mean OD/OC DSC for every variant present in
/// `records` (methods named after [`Variant::name`]).
pub fn ablation_table(records: &[MetricRecord]) -> Result<String> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let (Some(od), Some(oc)) = (
            method_dsc(records, v.name(), Structure::Disc),
            method_dsc(records, v.name(), Structure::Cup),
        ) else {
            continue;
        };
        let mark = |on: bool| if on { "✓" } else { "" }.to_string();
        let (a, f, m) = v.flags();
        rows.push(vec![
            v.name().to_string(),
            mark(a),
            mark(f),
            mark(m),
            format!("{od:.4}"),
            format!("{oc:.4}"),
            format!("{:.4}", (od + oc) / 2.0),
        ]);
    }
    if rows.is_empty() {
        return Err(Error::invalid(
            "no ablation variants found; expected run ids full, no_adaptor, no_fusion or no_multitask",
        ));
    }
    let header = ["Variant", "Adaptor", "Fusion", "Multi-task", "OD DSC", "OC DSC", "Mean DSC"].map(String::from);
    Ok(format!("## Ablation\n\n{}", render_table(&header, &rows)))
}
