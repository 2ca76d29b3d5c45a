use afnn::autograd::{avgpool2d, conv2d, grad_check, Mode, Tape, Var};
use afnn::losses::{cls_loss, rec_loss, weighted_dice_loss};
use afnn::model::{
    checkpoint_bytes, init_params, load_checkpoint, params_from_bytes, save_checkpoint, Group, ModelConfig,
    ModelParams,
};
use afnn::trainer::{optimizer_step, Adam};
use afnn::{Error, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn image(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[n, 3, h, w], 0.0, 1.0, &mut rng(seed))
}

/// Random non-zero biases so bias propagation is visible.
fn with_random_biases(mut p: ModelParams, seed: u64) -> ModelParams {
    let mut r = rng(seed);
    let names: Vec<(String, Vec<usize>)> = p
        .params()
        .iter()
        .filter(|q| q.name.ends_with(".bias"))
        .map(|q| (q.name.clone(), q.value.shape().to_vec()))
        .collect();
    for (name, shape) in names {
        p.set_value(&name, Tensor::randn(&shape, 0.3, &mut r)).unwrap();
    }
    p
}

fn forward_shapes(cfg: &ModelConfig, n: usize, h: usize, w: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut p = init_params(cfg, 1).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let x = tape.constant(image(n, h, w, 2));
    let out = p.network(&vars, Mode::Train).forward(x).unwrap();
    (
        out.adapted.shape(),
        out.seg.shape(),
        out.rec.unwrap().shape(),
        out.cls_logits.unwrap().shape(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn heads_follow_the_shape_law(n in 1usize..3, hm in 1usize..4, wm in 1usize..4, deep in any::<bool>()) {
        let cfg = if deep {
            ModelConfig { adaptor_channels: 2, level_channels: vec![2, 3, 4], n_domains: 3, ..ModelConfig::small() }
        } else {
            ModelConfig::small()
        };
        let m = cfg.spatial_multiple() * 4;
        let (h, w) = (hm * m, wm * m);
        let (adapted, seg, rec, cls) = forward_shapes(&cfg, n, h, w);
        prop_assert_eq!(adapted, vec![n, 3, h, w]);
        prop_assert_eq!(seg, vec![n, 2, h, w]);
        prop_assert_eq!(rec, vec![n, 3, h, w]);
        prop_assert_eq!(cls, vec![n, cfg.n_domains]);
    }

    #[test]
    fn blob1_ignores_a_constant_shift(shift in -0.5f64..0.5, seed in 0u64..1000) {
        let mut p = init_params(&ModelConfig::small(), seed).unwrap();
        let x = image(2, 8, 8, seed + 1);
        let mut shifted = x.clone();
        // Shift only the second image.
        let half = shifted.numel() / 2;
        for v in &mut shifted.data_mut()[half..] {
            *v += shift;
        }
        let tape = Tape::new();
        let vars = p.bind_constants(&tape);
        let mut net = p.network(&vars, Mode::Train);
        let a = net.adaptor_blob1(tape.constant(x)).unwrap().value();
        let b = net.adaptor_blob1(tape.constant(shifted)).unwrap().value();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-5);
    }
}

#[test]
fn default_config_shapes() {
    let cfg = ModelConfig { n_domains: 3, ..ModelConfig::default() };
    let (adapted, seg, rec, cls) = forward_shapes(&cfg, 1, 16, 24);
    assert_eq!(adapted, vec![1, 3, 16, 24]);
    assert_eq!(seg, vec![1, 2, 16, 24]);
    assert_eq!(rec, vec![1, 3, 16, 24]);
    assert_eq!(cls, vec![1, 3]);
}

#[test]
fn indivisible_input_is_a_shape_error() {
    let mut p = init_params(&ModelConfig::default(), 0).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let x = tape.constant(image(1, 12, 16, 0));
    assert!(matches!(p.network(&vars, Mode::Train).forward(x), Err(Error::Shape { .. })));
}

#[test]
fn constant_images_of_different_brightness_share_blob1_output() {
    let mut p = init_params(&ModelConfig::small(), 4).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let mut net = p.network(&vars, Mode::Train);
    let dim = net.adaptor_blob1(tape.constant(Tensor::full(&[1, 3, 8, 8], 0.2))).unwrap().value();
    let bright = net.adaptor_blob1(tape.constant(Tensor::full(&[1, 3, 8, 8], 0.9))).unwrap().value();
    assert!(dim.max_abs_diff(&bright).unwrap() <= 1e-5);
}

#[test]
fn outputs_stay_inside_activation_ranges() {
    let mut p = with_random_biases(init_params(&ModelConfig::small(), 5).unwrap(), 6);
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let out = p.network(&vars, Mode::Train).forward(tape.constant(image(2, 8, 8, 7))).unwrap();
    assert!(out.seg.value().data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(out.rec.unwrap().value().data().iter().all(|&v| v > -1.0 && v < 1.0));
}

#[test]
fn multi_level_fusion_is_a_sum_of_projections() {
    let cfg = ModelConfig { level_channels: vec![3, 4, 5], ..ModelConfig::small() };
    let p = with_random_biases(init_params(&cfg, 8).unwrap(), 9);
    let x = image(2, 16, 16, 10);
    for level in 0..cfg.depth() {
        let mut full = p.clone();
        let tape = Tape::new();
        let vars = full.bind_constants(&tape);
        let mut net = full.network(&vars, Mode::Train);
        let enc = net.encoder(tape.constant(x.clone())).unwrap();
        let fused = net.multi_level(&enc.skips).unwrap().value();

        let mut zeroed = p.clone();
        let w_name = format!("backbone.fusion.proj{level}.weight");
        let b_name = format!("backbone.fusion.proj{level}.bias");
        let w = p.get(&w_name).unwrap().value.clone();
        let b = p.get(&b_name).unwrap().value.clone();
        zeroed.set_value(&w_name, Tensor::zeros(w.shape())).unwrap();
        zeroed.set_value(&b_name, Tensor::zeros(b.shape())).unwrap();
        let vars = zeroed.bind_constants(&tape);
        let partial = zeroed.network(&vars, Mode::Eval).multi_level(&enc.skips).unwrap();

        let factor = 1 << (cfg.depth() - 1 - level);
        let pooled = avgpool2d(enc.skips[level], factor).unwrap();
        let external = conv2d(pooled, tape.constant(w), Some(tape.constant(b)), 1, 0).unwrap();
        let rebuilt = partial.add(external).unwrap().value();
        assert!(fused.max_abs_diff(&rebuilt).unwrap() <= 1e-6, "level {level}");
    }
}

#[test]
fn single_level_fusion_has_one_term() {
    let cfg = ModelConfig { level_channels: vec![4], ..ModelConfig::small() };
    let mut p = with_random_biases(init_params(&cfg, 11).unwrap(), 12);
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let mut net = p.network(&vars, Mode::Train);
    let enc = net.encoder(tape.constant(image(1, 6, 6, 13))).unwrap();
    assert_eq!(enc.skips.len(), 1);
    let z = net.multi_level(&enc.skips).unwrap();
    let w = tape.constant(p_value(&p, "backbone.fusion.proj0.weight"));
    let b = tape.constant(p_value(&p, "backbone.fusion.proj0.bias"));
    let direct = conv2d(enc.skips[0], w, Some(b), 1, 0).unwrap();
    assert!(z.value().max_abs_diff(&direct.value()).unwrap() == 0.0);
}

fn p_value(p: &ModelParams, name: &str) -> Tensor {
    p.get(name).unwrap().value.clone()
}

/// Zero-padded convolution of a spatially constant map, evaluated directly.
fn conv_of_constant(z: &[f64], w: &Tensor, b: &Tensor, h: usize, wd: usize) -> Vec<Vec<f64>> {
    let (o, c, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let pad = (k / 2) as isize;
    let mut out = vec![vec![0.0; h * wd]; o];
    for (oi, plane) in out.iter_mut().enumerate() {
        for y in 0..h {
            for x in 0..wd {
                let mut acc = b.data()[oi];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let (sy, sx) = (y as isize + ky as isize - pad, x as isize + kx as isize - pad);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                                acc += w.data()[((oi * c + ci) * k + ky) * k + kx] * z[ci];
                            }
                        }
                    }
                }
                plane[y * wd + x] = acc;
            }
        }
    }
    out
}

#[test]
fn zero_input_fuses_to_bias_propagation() {
    let cfg = ModelConfig { level_channels: vec![3, 4], multiscale_kernels: vec![1, 3, 5], ..ModelConfig::small() };
    let mut p = with_random_biases(init_params(&cfg, 14).unwrap(), 15);
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let enc = p.network(&vars, Mode::Train).encoder(tape.constant(Tensor::zeros(&[1, 3, 8, 8]))).unwrap();
    let fused = enc.fused.value();
    let (h, w, d) = (4, 4, cfg.fusion_dim());

    // Bias-free convs of zero give zero, batch norm maps a constant batch to
    // its shift (beta = 0), so every encoder level is zero.
    let mut z = vec![0.0; d];
    for i in 0..cfg.depth() {
        let b = p_value(&p, &format!("backbone.fusion.proj{i}.bias"));
        for (zc, bc) in z.iter_mut().zip(b.data()) {
            *zc += bc;
        }
    }
    let mut branches = Vec::new();
    for &k in &cfg.multiscale_kernels {
        let w_k = p_value(&p, &format!("backbone.fusion.branch{k}.weight"));
        let b_k = p_value(&p, &format!("backbone.fusion.branch{k}.bias"));
        for plane in conv_of_constant(&z, &w_k, &b_k, h, w) {
            branches.push(plane.into_iter().map(|v| v.max(0.0)).collect::<Vec<f64>>());
        }
    }
    let w_r = p_value(&p, "backbone.fusion.reduce.weight");
    let b_r = p_value(&p, "backbone.fusion.reduce.bias");
    let cin = branches.len();
    for o in 0..d {
        for px in 0..h * w {
            let expect = b_r.data()[o] + (0..cin).map(|c| w_r.data()[o * cin + c] * branches[c][px]).sum::<f64>();
            let got = fused.data()[o * h * w + px];
            assert!((got - expect).abs() <= 1e-9, "channel {o} pixel {px}: {got} vs {expect}");
        }
    }
}

#[test]
fn doubling_the_input_doubles_fused_resolution() {
    let cfg = ModelConfig::small();
    let mut p = init_params(&cfg, 16).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let mut net = p.network(&vars, Mode::Train);
    let a = net.encoder(tape.constant(image(1, 8, 8, 0))).unwrap().fused.shape();
    let b = net.encoder(tape.constant(image(1, 16, 16, 0))).unwrap().fused.shape();
    assert_eq!(a, vec![1, cfg.fusion_dim(), 4, 4]);
    assert_eq!(b, vec![1, cfg.fusion_dim(), 8, 8]);
}

#[test]
fn classifier_rows_sum_to_one_and_zero_input_is_uniform() {
    let cfg = ModelConfig::small();
    let mut p = init_params(&cfg, 17).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let mut net = p.network(&vars, Mode::Train);
    let fused = Tensor::randn(&[4, cfg.fusion_dim(), 2, 2], 1.0, &mut rng(18));
    let probs = net.cls_head(tape.constant(fused)).unwrap().value();
    for row in probs.data().chunks(cfg.n_domains) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    let zero = net.cls_head(tape.constant(Tensor::zeros(&[2, cfg.fusion_dim(), 2, 2]))).unwrap().value();
    let uniform = 1.0 / cfg.n_domains as f64;
    assert!(zero.data().iter().all(|&v| (v - uniform).abs() <= 1e-12));

    let mut biased = with_random_biases(p.clone(), 19);
    let vars = biased.bind_constants(&tape);
    let zero = biased
        .network(&vars, Mode::Train)
        .cls_head(tape.constant(Tensor::zeros(&[1, cfg.fusion_dim(), 2, 2])))
        .unwrap()
        .value();
    assert!(zero.data().iter().any(|&v| (v - uniform).abs() > 1e-6));
}

/// Gradient of a head with respect to its input; parameters are constants.
fn check_input_grad<F>(p: &ModelParams, input: Tensor, tol: f64, head: F)
where
    F: for<'a, 't> Fn(&mut afnn::model::Network<'a, 't>, Var<'t>) -> afnn::Result<Var<'t>>,
{
    let report = grad_check(
        |tape: &Tape, v: &[Var<'_>]| {
            let mut local = p.clone();
            let vars = local.bind_constants(tape);
            let mut net = local.network(&vars, Mode::Train);
            let y = head(&mut net, v[0])?;
            // Uneven weights so symmetric errors cannot cancel in the sum.
            let weights = Tensor::from_fn(&y.shape(), |i| ((i * 7919) % 13) as f64 / 13.0 - 0.4);
            Ok(y.mul(tape.constant(weights))?.sum())
        },
        &[input],
        1e-5,
        tol,
    )
    .unwrap();
    assert!(report.passed(), "max relative error {}", report.max_rel_error);
}

#[test]
fn adaptor_gradient_matches_finite_differences() {
    let p = with_random_biases(init_params(&ModelConfig::small(), 20).unwrap(), 21);
    check_input_grad(&p, image(2, 6, 6, 22), 1e-4, |net, x| net.adaptor(x));
}

#[test]
fn segmentation_path_gradient_matches_finite_differences() {
    let p = with_random_biases(init_params(&ModelConfig::small(), 23).unwrap(), 24);
    check_input_grad(&p, image(1, 16, 16, 25), 1e-4, |net, x| {
        let enc = net.encoder(x)?;
        net.seg_decoder(&enc)
    });
}

#[test]
fn reconstruction_head_gradient_matches_finite_differences() {
    let cfg = ModelConfig::small();
    let p = with_random_biases(init_params(&cfg, 26).unwrap(), 27);
    let fused = Tensor::randn(&[1, cfg.fusion_dim(), 8, 8], 1.0, &mut rng(28));
    check_input_grad(&p, fused, 1e-4, |net, z| net.rec_decoder(z));
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let cfg = ModelConfig::small();
    let p = with_random_biases(init_params(&cfg, 29).unwrap(), 30);
    let fused = Tensor::randn(&[3, cfg.fusion_dim(), 2, 2], 1.0, &mut rng(31));
    check_input_grad(&p, fused, 1e-6, |net, z| net.cls_head(z));
}

#[test]
fn total_loss_gradient_at_a_probe_pixel() {
    let cfg = ModelConfig::small();
    let mut p = with_random_biases(init_params(&cfg, 32).unwrap(), 33);
    let x = image(2, 8, 8, 34);
    let masks = Tensor::from_fn(&[2, 2, 8, 8], |i| ((i / 3) % 2) as f64);
    let labels = [0, 2];
    // The reconstruction target is data, not a function of the probed input.
    let target = x.clone();
    let loss = |p: &mut ModelParams, x: &Tensor| -> (f64, Option<Tensor>) {
        let tape = Tape::new();
        let vars = p.bind_constants(&tape);
        let xv = tape.leaf(x.clone());
        let out = p.network(&vars, Mode::Train).forward(xv).unwrap();
        let seg = weighted_dice_loss(out.seg, &masks, 0.4, 0.6, 1.0).unwrap().weighted;
        let rec = rec_loss(&target, out.rec.unwrap()).unwrap();
        let cls = cls_loss(out.cls_logits.unwrap(), &labels).unwrap();
        let total = seg.add(rec).unwrap().add(cls).unwrap();
        let value = total.item().unwrap();
        let mut g = tape.backward(total).unwrap();
        (value, g.take(xv))
    };
    let (_, grad) = loss(&mut p, &x);
    let grad = grad.unwrap();
    let h = 1e-5;
    for probe in [0, 37, 100, 3 * 64 + 17, 2 * 3 * 64 - 1] {
        let (mut up, mut down) = (x.clone(), x.clone());
        up.data_mut()[probe] += h;
        down.data_mut()[probe] -= h;
        let numeric = (loss(&mut p.clone(), &up).0 - loss(&mut p.clone(), &down).0) / (2.0 * h);
        let analytic = grad.data()[probe];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel <= 1e-3, "pixel {probe}: analytic {analytic} numeric {numeric}");
    }
}

fn trained_once(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(cfg, seed).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    p.network(&vars, Mode::Train).forward(tape.constant(image(2, 8, 8, seed))).unwrap();
    p.round_stats_to_f32();
    p
}

#[test]
fn checkpoint_round_trip_preserves_eval_forward() {
    let cfg = ModelConfig::small();
    let p = trained_once(&cfg, 35);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.afnn");
    save_checkpoint(&p, &path).unwrap();
    let q = load_checkpoint(&path, &cfg).unwrap();
    assert_eq!(p, q);
    assert_eq!(checkpoint_bytes(&q), std::fs::read(&path).unwrap());

    let x = image(1, 8, 8, 36);
    let eval = |mut m: ModelParams| {
        let tape = Tape::new();
        let vars = m.bind_constants(&tape);
        let seg = m.network(&vars, Mode::Eval).forward(tape.constant(x.clone())).unwrap().seg;
        (*seg.value()).clone()
    };
    assert_eq!(eval(p).data(), eval(q).data());
}

#[test]
fn checkpoint_header_matches_the_documented_layout() {
    let p = init_params(&ModelConfig::small(), 37).unwrap();
    let bytes = checkpoint_bytes(&p);
    assert_eq!(&bytes[..4], b"AFNN");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    // Untouched running statistics are not written.
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, p.params().len());
    let first = &p.params()[0];
    let len = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
    assert_eq!(&bytes[14..14 + len], first.name.as_bytes());
}

#[test]
fn corrupt_or_mismatched_checkpoints_are_rejected() {
    let cfg = ModelConfig::small();
    let bytes = checkpoint_bytes(&trained_once(&cfg, 38));
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(params_from_bytes(&bad_magic, &cfg), Err(Error::Checkpoint(_))));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(matches!(params_from_bytes(&bad_version, &cfg), Err(Error::Checkpoint(_))));
    assert!(matches!(params_from_bytes(&bytes[..bytes.len() - 3], &cfg), Err(Error::Checkpoint(_))));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(params_from_bytes(&trailing, &cfg), Err(Error::Checkpoint(_))));
    let wider = ModelConfig { level_channels: vec![4, 7], ..cfg };
    assert!(matches!(params_from_bytes(&bytes, &wider), Err(Error::Checkpoint(_))));
}

#[test]
fn eval_mode_before_any_training_batch_is_an_error() {
    let mut p = init_params(&ModelConfig::small(), 39).unwrap();
    let tape = Tape::new();
    let vars = p.bind_constants(&tape);
    let r = p.network(&vars, Mode::Eval).forward(tape.constant(image(1, 8, 8, 0)));
    assert!(matches!(r, Err(Error::UninitializedStats(_))));
}

#[test]
fn frozen_backbone_survives_an_optimizer_step() {
    let cfg = ModelConfig::small();
    let mut p = init_params(&cfg, 40).unwrap();
    p.set_frozen(Group::Backbone, true);
    let before: Vec<Tensor> = p.group(Group::Backbone).map(|q| q.value.clone()).collect();
    let mut adam = Adam::new(&p);
    let grads = {
        let tape = Tape::new();
        let vars = p.bind(&tape);
        let mut local = p.clone();
        let out = local.network(&vars, Mode::Train).forward(tape.constant(image(2, 8, 8, 41))).unwrap();
        let loss = out.seg.sum().add(out.rec.unwrap().square().sum()).unwrap();
        let loss = loss.add(out.cls_logits.unwrap().square().sum()).unwrap();
        let mut g = tape.backward(loss).unwrap();
        vars.iter().map(|&v| g.take(v)).collect::<Vec<_>>()
    };
    optimizer_step(&mut p, &grads, &mut adam, 1e-2).unwrap();
    let after: Vec<Tensor> = p.group(Group::Backbone).map(|q| q.value.clone()).collect();
    assert_eq!(before, after);
    let moved = p.group(Group::Adaptor).filter(|q| q.name.ends_with("weight")).count();
    assert!(moved > 0);
    let initial = init_params(&cfg, 40).unwrap();
    assert!(p
        .group(Group::Adaptor)
        .filter(|q| q.name.ends_with("weight"))
        .all(|q| q.value != initial.get(&q.name).unwrap().value));
}
