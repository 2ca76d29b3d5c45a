//! Forward pass of the adaptor, fusion encoder and the three heads.

use std::collections::{BTreeMap, HashMap};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::autograd::{
    avgpool2d, batch_norm, channel_affine, concat, conv2d, global_avg_pool, instance_norm, linear,
    pad_edge, softmax, upsample_nearest, Mode, RunningStats, Var,
};
use crate::error::{Error, Result};

/// Every head's output for one batch.
pub struct Outputs<'t> {
    /// Input after the adaptor (the input itself when it is disabled).
    pub adapted: Var<'t>,
    /// N×2×H×W probabilities: disc, cup.
    pub seg: Var<'t>,
    /// N×3×H×W reconstruction in (−1, 1).
    pub rec: Option<Var<'t>>,
    /// N×D domain logits.
    pub cls_logits: Option<Var<'t>>,
}

/// Deepest fused features plus the per-level encoder features.
pub struct Encoded<'t> {
    pub fused: Var<'t>,
    pub skips: Vec<Var<'t>>,
}

/// A network bound to one tape. Parameters are looked up by name in `vars`,
/// which is indexed like [`ModelParams::params`].
pub struct Network<'a, 't> {
    config: &'a ModelConfig,
    index: HashMap<&'a str, usize>,
    vars: &'a [Var<'t>],
    stats: &'a mut BTreeMap<String, RunningStats>,
    mode: Mode,
}

impl ModelParams {
    /// Binds the network to `vars` (from [`bind`](Self::bind) or
    /// [`bind_constants`](Self::bind_constants)). Train mode updates this
    /// model's batch-norm running statistics.
    pub fn network<'a, 't>(&'a mut self, vars: &'a [Var<'t>], mode: Mode) -> Network<'a, 't> {
        assert_eq!(vars.len(), self.params().len(), "one variable per parameter");
        // Field-level borrows so `stats` can be borrowed mutably alongside.
        let ModelParams {
            config,
            params,
            stats,
            ..
        } = self;
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.as_str(), i))
            .collect();
        Network {
            config,
            index,
            vars,
            stats,
            mode,
        }
    }
}

impl<'a, 't> Network<'a, 't> {
    fn p(&self, name: &str) -> Result<Var<'t>> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("model has no parameter `{name}`")))
    }

    fn conv(&self, x: Var<'t>, name: &str, pad: usize, bias: bool) -> Result<Var<'t>> {
        let b = if bias {
            Some(self.p(&format!("{name}.bias"))?)
        } else {
            None
        };
        conv2d(x, self.p(&format!("{name}.weight"))?, b, 1, pad)
    }

    fn bn(&mut self, x: Var<'t>, name: &str) -> Result<Var<'t>> {
        let (eps, momentum, mode) = (self.config.eps, self.config.momentum, self.mode);
        let stats = self
            .stats
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("model has no batch-norm layer `{name}`")))?;
        let y = batch_norm(x, eps, mode, stats, momentum).map_err(|e| match e {
            Error::UninitializedStats(_) => Error::UninitializedStats(name.to_string()),
            other => other,
        })?;
        channel_affine(y, self.p(&format!("{name}.gamma"))?, self.p(&format!("{name}.beta"))?)
    }

    fn conv_bn_relu(&mut self, x: Var<'t>, name: &str) -> Result<Var<'t>> {
        let y = self.conv(x, &format!("{name}.conv"), 1, false)?;
        Ok(self.bn(y, &format!("{name}.bn"))?.relu())
    }

    fn check_input(&self, x: Var<'t>) -> Result<(usize, usize)> {
        let (_, c, h, w) = x.value().dims4("model")?;
        if c != 3 {
            return Err(Error::shape("model", format!("expected 3 input channels, got {c}")));
        }
        let m = self.config.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::shape(
                "model",
                format!("input {h}x{w} must be divisible by {m} for {} levels", self.config.depth()),
            ));
        }
        Ok((h, w))
    }

    /// First adaptor blob: conv 3×3, instance norm, relu. The conv pads by
    /// repeating edge pixels, so a constant brightness offset stays constant
    /// per channel and the instance norm cancels it everywhere.
    pub fn adaptor_blob1(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        let y = self.conv(pad_edge(x, 1)?, "adaptor.blob1.conv", 0, false)?;
        Ok(instance_norm(y, self.config.eps)?.relu())
    }

    /// Both blobs and the closing 1×1 projection back to three channels.
    pub fn adaptor(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        if !self.config.use_adaptor {
            return Ok(x);
        }
        let y = self.adaptor_blob1(x)?;
        let y = self.conv_bn_relu(y, "adaptor.blob2")?;
        self.conv(y, "adaptor.out", 0, true)
    }

    /// Encoder stages, then multi-level and multi-scale fusion.
    pub fn encoder(&mut self, x: Var<'t>) -> Result<Encoded<'t>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth());
        let mut cur = x;
        for i in 0..self.config.depth() {
            if i > 0 {
                cur = avgpool2d(cur, 2)?;
            }
            cur = self.conv_bn_relu(cur, &format!("backbone.stage{i}"))?;
            skips.push(cur);
        }
        let fused = if self.config.use_fusion {
            let z = self.multi_level(&skips)?;
            self.multi_scale(z)?
        } else {
            cur
        };
        Ok(Encoded { fused, skips })
    }

    /// Pools every level to the deepest resolution, projects each to the
    /// fusion width with its own 1×1 conv, and sums the projections.
    pub fn multi_level(&mut self, skips: &[Var<'t>]) -> Result<Var<'t>> {
        let depth = skips.len();
        let mut sum: Option<Var<'t>> = None;
        for (i, &f) in skips.iter().enumerate() {
            let pooled = avgpool2d(f, 1 << (depth - 1 - i))?;
            let proj = self.conv(pooled, &format!("backbone.fusion.proj{i}"), 0, true)?;
            sum = Some(match sum {
                Some(s) => s.add(proj)?,
                None => proj,
            });
        }
        sum.ok_or_else(|| Error::invalid("multi-level fusion needs at least one level"))
    }

    /// Parallel same-padding convolutions of each kernel size, relu,
    /// concatenated and reduced back to the fusion width by a 1×1 conv.
    pub fn multi_scale(&mut self, z: Var<'t>) -> Result<Var<'t>> {
        let branches = self
            .config
            .multiscale_kernels
            .iter()
            .map(|&k| Ok(self.conv(z, &format!("backbone.fusion.branch{k}"), k / 2, true)?.relu()))
            .collect::<Result<Vec<_>>>()?;
        let cat = concat(&branches, 1)?;
        self.conv(cat, "backbone.fusion.reduce", 0, true)
    }

    /// Up-blocks with skip connections, then a 1×1 conv to two sigmoid maps.
    pub fn seg_decoder(&mut self, enc: &Encoded<'t>) -> Result<Var<'t>> {
        let mut cur = enc.fused;
        for i in (0..self.config.depth() - 1).rev() {
            let up = upsample_nearest(cur, 2)?;
            let cat = concat(&[up, enc.skips[i]], 1)?;
            cur = self.conv_bn_relu(cat, &format!("head_seg.up{i}"))?;
        }
        Ok(self.conv(cur, "head_seg.out", 0, true)?.sigmoid())
    }

    /// Up-blocks without skips, then a 1×1 conv to three tanh channels.
    pub fn rec_decoder(&mut self, fused: Var<'t>) -> Result<Var<'t>> {
        let mut cur = fused;
        for i in (0..self.config.depth() - 1).rev() {
            let up = upsample_nearest(cur, 2)?;
            cur = self.conv_bn_relu(up, &format!("head_rec.up{i}"))?;
        }
        Ok(self.conv(cur, "head_rec.out", 0, true)?.tanh())
    }

    /// Global average pool and a linear map to domain logits.
    pub fn cls_logits(&mut self, fused: Var<'t>) -> Result<Var<'t>> {
        let pooled = global_avg_pool(fused)?;
        linear(pooled, self.p("head_cls.linear.weight")?, self.p("head_cls.linear.bias")?)
    }

    /// Softmax over [`cls_logits`](Self::cls_logits).
    pub fn cls_head(&mut self, fused: Var<'t>) -> Result<Var<'t>> {
        softmax(self.cls_logits(fused)?, 1)
    }

    pub fn forward(&mut self, x: Var<'t>) -> Result<Outputs<'t>> {
        self.check_input(x)?;
        let adapted = self.adaptor(x)?;
        let enc = self.encoder(adapted)?;
        let seg = self.seg_decoder(&enc)?;
        let (rec, cls_logits) = if self.config.use_multitask {
            (Some(self.rec_decoder(enc.fused)?), Some(self.cls_logits(enc.fused)?))
        } else {
            (None, None)
        };
        Ok(Outputs {
            adapted,
            seg,
            rec,
            cls_logits,
        })
    }
}
