use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::autograd::{RunningStats, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameter partition used for freezing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Adaptor,
    Backbone,
    HeadSeg,
    HeadRec,
    HeadCls,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::Adaptor,
        Group::Backbone,
        Group::HeadSeg,
        Group::HeadRec,
        Group::HeadCls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Adaptor => "adaptor",
            Group::Backbone => "backbone",
            Group::HeadSeg => "head_seg",
            Group::HeadRec => "head_rec",
            Group::HeadCls => "head_cls",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown parameter group `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
    pub frozen: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    He { fan_in: usize },
    Zeros,
    Ones,
}

/// Names, shapes and initializers of every parameter, in registration order,
/// plus the batch-norm layers and their channel counts.
pub(crate) struct Layout {
    pub params: Vec<(String, Group, Vec<usize>, Init)>,
    pub norms: Vec<(String, usize)>,
}

impl Layout {
    fn conv(&mut self, name: &str, group: Group, out: usize, inp: usize, k: usize, bias: bool) {
        self.params.push((
            format!("{name}.weight"),
            group,
            vec![out, inp, k, k],
            Init::He { fan_in: inp * k * k },
        ));
        if bias {
            self.params.push((format!("{name}.bias"), group, vec![out], Init::Zeros));
        }
    }

    fn bn(&mut self, name: &str, group: Group, ch: usize) {
        self.params.push((format!("{name}.gamma"), group, vec![ch], Init::Ones));
        self.params.push((format!("{name}.beta"), group, vec![ch], Init::Zeros));
        self.norms.push((name.to_string(), ch));
    }

    pub fn of(cfg: &ModelConfig) -> Layout {
        let mut l = Layout {
            params: Vec::new(),
            norms: Vec::new(),
        };
        let ch = &cfg.level_channels;
        let depth = ch.len();
        if cfg.use_adaptor {
            let c = cfg.adaptor_channels;
            l.conv("adaptor.blob1.conv", Group::Adaptor, c, 3, 3, false);
            l.conv("adaptor.blob2.conv", Group::Adaptor, c, c, 3, false);
            l.bn("adaptor.blob2.bn", Group::Adaptor, c);
            l.conv("adaptor.out", Group::Adaptor, 3, c, 1, true);
        }
        let mut prev = 3;
        for (i, &c) in ch.iter().enumerate() {
            l.conv(&format!("backbone.stage{i}.conv"), Group::Backbone, c, prev, 3, false);
            l.bn(&format!("backbone.stage{i}.bn"), Group::Backbone, c);
            prev = c;
        }
        let fd = cfg.fusion_dim();
        if cfg.use_fusion {
            for (i, &c) in ch.iter().enumerate() {
                l.conv(&format!("backbone.fusion.proj{i}"), Group::Backbone, fd, c, 1, true);
            }
            for &k in &cfg.multiscale_kernels {
                l.conv(&format!("backbone.fusion.branch{k}"), Group::Backbone, fd, fd, k, true);
            }
            let cat = fd * cfg.multiscale_kernels.len();
            l.conv("backbone.fusion.reduce", Group::Backbone, fd, cat, 1, true);
        }
        let mut cur = fd;
        for i in (0..depth - 1).rev() {
            let name = format!("head_seg.up{i}");
            l.conv(&format!("{name}.conv"), Group::HeadSeg, ch[i], cur + ch[i], 3, false);
            l.bn(&format!("{name}.bn"), Group::HeadSeg, ch[i]);
            cur = ch[i];
        }
        l.conv("head_seg.out", Group::HeadSeg, 2, cur, 1, true);
        if cfg.use_multitask {
            let mut cur = fd;
            for i in (0..depth - 1).rev() {
                let name = format!("head_rec.up{i}");
                l.conv(&format!("{name}.conv"), Group::HeadRec, ch[i], cur, 3, false);
                l.bn(&format!("{name}.bn"), Group::HeadRec, ch[i]);
                cur = ch[i];
            }
            l.conv("head_rec.out", Group::HeadRec, 3, cur, 1, true);
            l.params.push((
                "head_cls.linear.weight".into(),
                Group::HeadCls,
                vec![fd, cfg.n_domains],
                Init::He { fan_in: fd },
            ));
            l.params.push(("head_cls.linear.bias".into(), Group::HeadCls, vec![cfg.n_domains], Init::Zeros));
        }
        l
    }
}

/// Every trainable tensor of the network, with batch-norm running
/// statistics keyed by layer name.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub(super) params: Vec<Parameter>,
    index: HashMap<String, usize>,
    pub stats: BTreeMap<String, RunningStats>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.stats == other.stats
    }
}

/// He-style initialization, zero biases, unit batch-norm scale. Values are
/// rounded to `f32` so checkpoints store them exactly.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let layout = Layout::of(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = layout
        .params
        .into_iter()
        .map(|(name, group, shape, init)| {
            let mut value = match init {
                Init::He { fan_in } => Tensor::randn(&shape, (2.0 / fan_in as f64).sqrt(), &mut rng),
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::ones(&shape),
            };
            value.round_to_f32();
            Parameter {
                name,
                group,
                value,
                frozen: false,
            }
        })
        .collect();
    let stats = layout
        .norms
        .into_iter()
        .map(|(name, ch)| (name, RunningStats::new(ch)))
        .collect();
    Ok(ModelParams::from_parts(config.clone(), params, stats))
}

impl ModelParams {
    pub(crate) fn from_parts(
        config: ModelConfig,
        params: Vec<Parameter>,
        stats: BTreeMap<String, RunningStats>,
    ) -> Self {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        ModelParams {
            config,
            params,
            index,
            stats,
        }
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Replaces one parameter's value; the shape must not change.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
        if self.params[i].value.shape() != value.shape() {
            return Err(Error::shape(
                "set_value",
                format!("`{name}` is {:?}, got {:?}", self.params[i].value.shape(), value.shape()),
            ));
        }
        self.params[i].value = value;
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn set_frozen(&mut self, group: Group, frozen: bool) {
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            p.frozen = frozen;
        }
    }

    /// [`set_frozen`](Self::set_frozen) by group name.
    pub fn set_frozen_by_name(&mut self, group: &str, frozen: bool) -> Result<()> {
        self.set_frozen(group.parse()?, frozen);
        Ok(())
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &Parameter> {
        self.params.iter().filter(move |p| p.group == group)
    }

    /// Records every parameter on `tape`: frozen ones as constants, the rest
    /// as leaves. The result is indexed like [`params`](Self::params).
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| tape.var(p.value.clone(), !p.frozen))
            .collect()
    }

    /// Records every parameter as a constant.
    pub fn bind_constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    pub fn round_stats_to_f32(&mut self) {
        for s in self.stats.values_mut() {
            s.round_to_f32();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = ModelConfig::small();
        assert_eq!(init_params(&cfg, 3).unwrap(), init_params(&cfg, 3).unwrap());
        assert_ne!(init_params(&cfg, 3).unwrap(), init_params(&cfg, 4).unwrap());
    }

    #[test]
    fn names_are_unique_and_groups_total() {
        let p = init_params(&ModelConfig::default(), 0).unwrap();
        let mut names: Vec<&str> = p.params().iter().map(|p| p.name.as_str()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        for g in Group::ALL {
            assert!(p.group(g).count() > 0, "{g} empty");
            assert!(p.group(g).all(|q| q.name.starts_with(g.as_str())));
        }
    }

    #[test]
    fn he_variance_on_large_layers() {
        let p = init_params(&ModelConfig::default(), 1).unwrap();
        for q in p.params().iter().filter(|q| q.name.ends_with(".weight") && q.value.numel() >= 20_000) {
            let fan_in: usize = q.value.shape()[1..].iter().product();
            let fan_in = if q.value.rank() == 2 { q.value.shape()[0] } else { fan_in };
            let var = q.value.data().iter().map(|v| v * v).sum::<f64>() / q.value.numel() as f64;
            let expect = 2.0 / fan_in as f64;
            assert!((var / expect - 1.0).abs() < 0.2, "{}: {var} vs {expect}", q.name);
        }
        assert!(p.params().iter().filter(|q| q.name.ends_with(".bias")).all(|q| q.value.max_abs() == 0.0));
        assert!(p.params().iter().filter(|q| q.name.ends_with(".gamma")).all(|q| q.value.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn freezing_by_group_name() {
        let mut p = init_params(&ModelConfig::small(), 0).unwrap();
        p.set_frozen_by_name("backbone", true).unwrap();
        assert!(p.group(Group::Backbone).all(|q| q.frozen));
        assert!(p.group(Group::Adaptor).all(|q| !q.frozen));
        assert!(p.set_frozen_by_name("encoder", true).is_err());
    }
}
