//! Photometric summary statistics per domain and the scalar domain gap.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const HISTOGRAM_BINS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(lo: f64, hi: f64) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; HISTOGRAM_BINS],
        }
    }

    fn add(&mut self, v: f64) {
        let span = self.hi - self.lo;
        let bin = if span > 0.0 {
            (((v - self.lo) / span) * HISTOGRAM_BINS as f64).floor() as isize
        } else {
            0
        };
        self.counts[bin.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let step = (self.hi - self.lo) / HISTOGRAM_BINS as f64;
        (self.lo + step * bin as f64, self.lo + step * (bin + 1) as f64)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DomainStats {
    pub domain: usize,
    pub images: usize,
    /// Mean over every pixel and channel of every image.
    pub mean_intensity: f64,
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    pub histograms: Vec<Histogram>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub domains: Vec<DomainStats>,
    /// Population variance across domains of `mean_intensity`.
    pub gap: f64,
}

/// Summarizes C×H×W images grouped by domain. Histograms share one range,
/// the observed minimum and maximum over all groups.
pub fn domain_gap_stats(groups: &[(usize, Vec<Tensor>)]) -> Result<GapReport> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "domain gap needs at least two domains, got {}",
            groups.len()
        )));
    }
    let mut channels = None;
    for (domain, images) in groups {
        if images.is_empty() {
            return Err(Error::invalid(format!("domain {domain} has no images")));
        }
        for img in images {
            let c = *img.shape().first().unwrap_or(&0);
            if img.rank() != 3 || *channels.get_or_insert(c) != c {
                return Err(Error::shape(
                    "domain_gap_stats",
                    format!("expected C×H×W images with a common C, got {:?}", img.shape()),
                ));
            }
        }
    }
    let channels = channels.unwrap_or(0);
    let (lo, hi) = groups
        .iter()
        .flat_map(|(_, imgs)| imgs.iter().flat_map(|t| t.data().iter()))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let mut domains = Vec::with_capacity(groups.len());
    for (domain, images) in groups {
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        let mut count = vec![0usize; channels];
        let mut histograms = vec![Histogram::new(lo, hi); channels];
        for img in images {
            let plane = img.numel() / channels;
            for (c, values) in img.data().chunks_exact(plane).enumerate() {
                for &v in values {
                    sum[c] += v;
                    sq[c] += v * v;
                    histograms[c].add(v);
                }
                count[c] += plane;
            }
        }
        let channel_mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
        let channel_std = sq
            .iter()
            .zip(&count)
            .zip(&channel_mean)
            .map(|((q, &n), m)| (q / n as f64 - m * m).max(0.0).sqrt())
            .collect();
        let mean_intensity = sum.iter().sum::<f64>() / count.iter().sum::<usize>() as f64;
        domains.push(DomainStats {
            domain: *domain,
            images: images.len(),
            mean_intensity,
            channel_mean,
            channel_std,
            histograms,
        });
    }
    let k = domains.len() as f64;
    let mean = domains.iter().map(|d| d.mean_intensity).sum::<f64>() / k;
    let gap = domains
        .iter()
        .map(|d| (d.mean_intensity - mean).powi(2))
        .sum::<f64>()
        / k;
    Ok(GapReport { domains, gap })
}

impl GapReport {
    /// Long-format CSV: domain, channel, bin, bin_lo, bin_hi, count.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("domain,channel,bin,bin_lo,bin_hi,count\n");
        for d in &self.domains {
            for (c, h) in d.histograms.iter().enumerate() {
                for (b, n) in h.counts.iter().enumerate() {
                    let (a, z) = h.bin_edges(b);
                    let _ = writeln!(out, "{},{c},{b},{a},{z},{n}", d.domain);
                }
            }
        }
        out
    }

    /// One polyline per domain of the channel-summed, normalized histogram.
    pub fn histogram_svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 320.0;
        const PAD: f64 = 30.0;
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let curves: Vec<Vec<f64>> = self
            .domains
            .iter()
            .map(|d| {
                let mut sum = vec![0.0; HISTOGRAM_BINS];
                for h in &d.histograms {
                    for (s, &n) in sum.iter_mut().zip(&h.counts) {
                        *s += n as f64;
                    }
                }
                let total: f64 = sum.iter().sum();
                sum.iter().map(|v| v / total.max(1.0)).collect()
            })
            .collect();
        let peak = curves.iter().flatten().fold(0.0f64, |m, &v| m.max(v)).max(1e-12);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{PAD}" y="18" font-family="sans-serif" font-size="13">{}</text>"#,
            escape(title)
        );
        for (i, (d, curve)) in self.domains.iter().zip(&curves).enumerate() {
            let pts: Vec<String> = curve
                .iter()
                .enumerate()
                .map(|(b, v)| {
                    let x = PAD + (W - 2.0 * PAD) * b as f64 / (HISTOGRAM_BINS - 1) as f64;
                    let y = H - PAD - (H - 2.0 * PAD) * v / peak;
                    format!("{x:.1},{y:.1}")
                })
                .collect();
            let color = colors[i % colors.len()];
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">domain {}</text>"#,
                W - 110.0,
                40.0 + 14.0 * i as f64,
                d.domain
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_domain(id: usize, v: f64) -> (usize, Vec<Tensor>) {
        (id, vec![Tensor::full(&[3, 4, 4], v); 2])
    }

    #[test]
    fn constant_domains_give_variance_of_levels() {
        let r = domain_gap_stats(&[constant_domain(0, 0.2), constant_domain(1, 0.8)]).unwrap();
        assert!((r.gap - 0.09).abs() < 1e-12);
        assert_eq!(r.domains[0].histograms[0].counts[0], 32);
        assert_eq!(r.domains[1].histograms[2].counts[HISTOGRAM_BINS - 1], 32);
    }

    #[test]
    fn identical_domains_have_no_gap() {
        let r = domain_gap_stats(&[constant_domain(0, 0.4), constant_domain(3, 0.4)]).unwrap();
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn rejects_single_or_empty_groups() {
        assert!(domain_gap_stats(&[constant_domain(0, 0.1)]).is_err());
        assert!(domain_gap_stats(&[constant_domain(0, 0.1), (1, vec![])]).is_err());
    }

    #[test]
    fn outputs_render() {
        let r = domain_gap_stats(&[constant_domain(0, 0.2), constant_domain(1, 0.8)]).unwrap();
        let csv = r.histogram_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 3 * HISTOGRAM_BINS);
        let svg = r.histogram_svg("raw <input>");
        assert!(svg.contains("&lt;input&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
