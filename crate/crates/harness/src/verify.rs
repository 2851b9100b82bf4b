//! The `verify` suite: self-contained numerical checks with reference
//! implementations, reported as one pass/fail line each plus a residual
//! CSV.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalechan::dataset::{
    generate_dataset, sha256_file, sharpen, smoothing_sigma, MnistSplit, RawMnist, ScaleSpec, Split,
};
use scalechan::nets::{
    conv_plan, covariance_probe, Aggregation, ChannelNet, ChannelNetSpec, CovarianceReport, PoolSpace, ProbeDepth,
    ScaleGrid,
};
use scalechan::scalespace::{check_filter_vs_image_scaling, scale_normalized_derivative, GridImage, ScaleParameter};
use scalechan::tensor::{conv2d_forward, cross_entropy_with_logits, LayerSpec, Mode, Sequential, Tensor};

use crate::config::{Arch, HarnessConfig};
use crate::error::Result;

pub struct VerifyOptions {
    /// Fewer seeds and probe digits.
    pub quick: bool,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// `suite,key,value` rows.
    pub residuals: Vec<String>,
}

impl VerifyReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<24} value={:.3e} threshold={:.3e} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold,
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "{} of {} checks passed",
            self.checks.len() - self.failed(),
            self.checks.len()
        );
        s
    }

    fn push(&mut self, name: &str, value: f64, threshold: f64, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            value,
            threshold,
            detail,
        });
    }
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).expect("sized")
}

/// Straight six-loop cross-correlation with zero padding.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let &[n, cin, h, wd] = x.shape() else { unreachable!() };
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for i in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()[((i * cin + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((co * cin + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[((i * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, cout, oh, ow], out).expect("sized")
}

/// Every layer kind in one small stack: conv (padded, strided), batch
/// normalisation, ReLU, dense, dropout, and softmax cross-entropy on top.
fn gradient_check(seed: u64) -> Result<f64> {
    let plan = [
        LayerSpec::conv(3, 3, 1, 1),
        LayerSpec::batchnorm(),
        LayerSpec::relu(),
        LayerSpec::conv(4, 3, 2, 0),
        LayerSpec::relu(),
        LayerSpec::dense(6),
        LayerSpec::dropout(0.3),
        LayerSpec::dense(10),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::<f64>::build(&plan, [2, 9, 9], &mut rng)?;
    // Nonzero biases and BN shifts keep units off the ReLU kink.
    for p in net.parameters_mut() {
        for v in p.data_mut() {
            *v += 0.2 * (rng.random::<f64>() - 0.5);
        }
    }
    let x = uniform(&[3, 2, 9, 9], &mut rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..10)).collect();
    let loss = |net: &mut Sequential<f64>, x: &Tensor<f64>| -> Result<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (z, _) = net.forward(x, Mode::Train, &mut r)?;
        Ok(cross_entropy_with_logits(&z, &labels)?.0)
    };
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    net.zero_grad();
    let (z, tape) = net.forward(&x, Mode::Train, &mut r)?;
    let (_, dz) = cross_entropy_with_logits(&z, &labels)?;
    let gx = net.backward(tape, dz)?;
    let analytic: Vec<Vec<f64>> = net
        .parameters_mut()
        .iter()
        .map(|p| p.grad().expect("parameter").to_vec())
        .chain(std::iter::once(gx.data().to_vec()))
        .collect();
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    let mut worst = 0.0f64;
    let n_params = analytic.len() - 1;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &g) in grads.iter().enumerate() {
            let numeric = if pi < n_params {
                let orig = net.parameters_mut()[pi].data()[j];
                net.parameters_mut()[pi].data_mut()[j] = orig + h;
                let up = loss(&mut net, &x)?;
                net.parameters_mut()[pi].data_mut()[j] = orig - h;
                let down = loss(&mut net, &x)?;
                net.parameters_mut()[pi].data_mut()[j] = orig;
                (up - down) / (2.0 * h)
            } else {
                let mut xp = x.clone();
                xp.data_mut()[j] += h;
                let up = loss(&mut net, &xp)?;
                xp.data_mut()[j] -= 2.0 * h;
                let down = loss(&mut net, &xp)?;
                (up - down) / (2.0 * h)
            };
            worst = worst.max(rel(g, numeric));
        }
    }
    Ok(worst)
}

fn conv_oracle() -> Result<f64> {
    let shapes = [
        // (batch, cin, h, w, cout, k, stride, pad)
        (2, 3, 7, 7, 4, 3, 1, 0),
        (2, 3, 8, 8, 4, 3, 2, 0),
        (1, 2, 9, 9, 3, 3, 2, 1),
        (3, 1, 6, 5, 2, 3, 1, 1),
        (2, 2, 11, 10, 3, 5, 2, 2),
        (1, 3, 5, 5, 2, 1, 1, 0),
        (2, 4, 12, 12, 5, 4, 2, 0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for (b, cin, h, w, cout, k, stride, pad) in shapes {
        let x = uniform(&[b, cin, h, w], &mut rng);
        let wt = uniform(&[cout, cin, k, k], &mut rng);
        let bias = uniform(&[cout], &mut rng);
        let fast = conv2d_forward(&x, &wt, &bias, stride, pad)?;
        worst = worst.max(fast.max_abs_diff(&naive_conv(&x, &wt, &bias, stride, pad)));
    }
    Ok(worst)
}

fn gaussian_image(size: usize, std: f64) -> GridImage<f64> {
    GridImage::from_fn(size, size, |x, y| (-(x * x + y * y) / (2.0 * std * std)).exp())
}

/// `|M - closed form| / peak` for a unit-peak Gaussian input, where `M` is
/// the rescale-filter-rescale side of the filter scaling identity.
fn scaling_residual(size: usize, f_std: f64, sigma_h: f64, s: f64) -> f64 {
    let report = check_filter_vs_image_scaling(&gaussian_image(size, f_std), sigma_h, s);
    let h = s * sigma_h;
    let var = f_std * f_std + h * h;
    let exact = GridImage::from_fn(size, size, |x, y| {
        f_std * f_std / var * (-(x * x + y * y) / (2.0 * var)).exp()
    });
    report.side_m.residual(&exact).0 / exact.max_value()
}

/// Selected scale over selected-from std, for each blob std.
fn scale_selection() -> Vec<(f64, f64)> {
    [2.0f64, 3.0, 4.0, 6.0]
        .iter()
        .map(|&sigma0| {
            let size = 160;
            let blob = gaussian_image(size, sigma0);
            let c = size / 2;
            let mut best = (0.0, 0.0);
            for k in 0..=14 {
                let sigma = 2f64.powf(k as f64 / 4.0);
                let t = ScaleParameter::new(sigma, 1.0).expect("positive");
                let lxx = scale_normalized_derivative(&blob, (2, 0), t);
                let lyy = scale_normalized_derivative(&blob, (0, 2), t);
                let v: f64 = [(c - 1, c - 1), (c - 1, c), (c, c - 1), (c, c)]
                    .iter()
                    .map(|&(i, j)| lxx.get(i, j) + lyy.get(i, j))
                    .sum();
                if v.abs() > best.1 {
                    best = (sigma, v.abs());
                }
            }
            (sigma0, best.0)
        })
        .collect()
}

fn tiny_channel_spec(aggregation: Aggregation) -> ChannelNetSpec {
    ChannelNetSpec {
        base_layers: conv_plan(&[4, 4], true, 0.0),
        grid: ScaleGrid::new(2f64.sqrt(), -2, 2).expect("valid"),
        aggregation,
        support: 12,
        pool_space: PoolSpace::Probabilities,
    }
}

/// Whether Max/Avg scores are bit-identical under channel permutations and
/// Concat scores are not.
fn permutation_checks() -> Result<(bool, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&[3, 1, 20, 20], &mut rng);
    let s = 5;
    let permute = |xs: &Tensor<f64>, perm: &[usize]| -> Result<Tensor<f64>> {
        let per = xs.numel() / xs.shape()[0];
        let mut data = Vec::with_capacity(xs.numel());
        for b in 0..xs.shape()[0] / s {
            for &src in perm {
                data.extend_from_slice(&xs.data()[(b * s + src) * per..(b * s + src + 1) * per]);
            }
        }
        Ok(Tensor::from_vec(xs.shape(), data)?)
    };
    let perms: [[usize; 5]; 3] = [[4, 3, 2, 1, 0], [1, 0, 3, 4, 2], [2, 4, 0, 1, 3]];
    let mut invariant = true;
    for agg in [Aggregation::Max, Aggregation::Avg] {
        for pool in [PoolSpace::Probabilities, PoolSpace::Logits] {
            let mut net = ChannelNet::<f64>::with_seed(
                ChannelNetSpec {
                    pool_space: pool,
                    ..tiny_channel_spec(agg)
                },
                11,
            )?;
            let xs = net.channel_inputs(&x)?;
            for mode in [Mode::Train, Mode::Eval] {
                let mut r = ChaCha8Rng::seed_from_u64(0);
                let reference = net.forward_channels(&xs, mode, &mut r)?.0.scores;
                for p in &perms {
                    let mut r = ChaCha8Rng::seed_from_u64(0);
                    let got = net.forward_channels(&permute(&xs, p)?, mode, &mut r)?.0.scores;
                    invariant &= reference
                        .data()
                        .iter()
                        .zip(got.data())
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                }
            }
        }
    }
    let mut conc = ChannelNet::<f64>::with_seed(tiny_channel_spec(Aggregation::Concat), 11)?;
    let xs = conc.channel_inputs(&x)?;
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let a = conc.forward_channels(&xs, Mode::Eval, &mut r)?.0.scores;
    let b = conc
        .forward_channels(&permute(&xs, &perms[0])?, Mode::Eval, &mut r)?
        .0
        .scores;
    Ok((invariant, a.max_abs_diff(&b) > 1e-9))
}

/// Covariance residuals of an untrained network on `n` probe digits.
fn covariance_reports(cfg: &HarnessConfig, raw: &RawMnist, n: usize) -> Result<Vec<CovarianceReport>> {
    // The first foveated max/avg model of the config, else the desk grid.
    let grid = cfg
        .models
        .iter()
        .find(|m| matches!(m.arch, Arch::FovMax | Arch::FovAvg))
        .and_then(|m| m.grid)
        .unwrap_or(ScaleGrid::new(2f64.sqrt(), -6, 2)?);
    let spec = scalechan::nets::build_scale_channel_net(Aggregation::Max, grid);
    let mut net = ChannelNet::<f64>::with_seed(spec, 0)?;
    let depths = [
        ProbeDepth::Block(1),
        ProbeDepth::Block(2),
        ProbeDepth::Block(3),
        ProbeDepth::Block(4),
        ProbeDepth::Output,
    ];
    let mut out = Vec::new();
    for i in 0..n.min(raw.len()) {
        let f = scalechan::dataset::make_scaled_image(raw.image(i), 2.0, cfg.data.out_size);
        for depth in depths {
            out.push(covariance_probe(&mut net, &f, grid.gamma, depth)?);
        }
    }
    Ok(out)
}

fn first_source(cfg: &HarnessConfig) -> Result<RawMnist> {
    let source = if cfg.data.test_source.is_some() {
        MnistSplit::Test
    } else {
        MnistSplit::Train
    };
    let (images, labels) = cfg.source_files(source)?;
    Ok(RawMnist::load(images, labels, source)?)
}

pub fn run_verify(cfg: &HarnessConfig, opts: &VerifyOptions) -> Result<VerifyReport> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut rep = VerifyReport::default();

    let seeds = if opts.quick { 5 } else { 20 };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let e = gradient_check(seed)?;
        rep.residuals.push(format!("gradients,seed{seed},{e:e}"));
        worst = worst.max(e);
    }
    rep.push(
        "gradients",
        worst,
        1e-4,
        worst < 1e-4,
        format!("max relative error over {seeds} seeds, f64"),
    );

    let conv = conv_oracle()?;
    rep.residuals.push(format!("conv_oracle,max_abs,{conv:e}"));
    rep.push(
        "conv_oracle",
        conv,
        1e-12,
        conv < 1e-12,
        "conv2d vs naive loops, strides 1 and 2".into(),
    );

    let mut worst = 0.0f64;
    let mut shrinks = true;
    for s in [0.5, 2.0] {
        let coarse = scaling_residual(64, 6.0, 2.0, s);
        let fine = scaling_residual(128, 12.0, 4.0, s);
        rep.residuals.push(format!("filter_scaling,s{s}_64,{coarse:e}"));
        rep.residuals.push(format!("filter_scaling,s{s}_128,{fine:e}"));
        worst = worst.max(coarse);
        shrinks &= fine < coarse;
    }
    rep.push(
        "filter_image_scaling",
        worst,
        1e-3,
        worst < 1e-3 && shrinks,
        format!("residual / peak on 64^2, shrinks on 128^2: {shrinks}"),
    );

    let step = 2f64.powf(0.25);
    let sel = scale_selection();
    let worst_ratio = sel.iter().map(|&(s0, s)| (s / s0).ln().abs()).fold(0.0, f64::max).exp();
    for (s0, s) in &sel {
        rep.residuals.push(format!("scale_selection,sigma0_{s0},{s}"));
    }
    rep.push(
        "scale_selection",
        worst_ratio,
        step,
        worst_ratio <= step * (1.0 + 1e-9),
        format!("selected/true std for sigma0 in {{2,3,4,6}}: {sel:?}"),
    );

    let (inv, conc_differs) = permutation_checks()?;
    rep.push(
        "permutation_invariance",
        inv as u8 as f64,
        1.0,
        inv,
        "FovMax/FovAvg bit-identical".into(),
    );
    rep.push(
        "concat_counterexample",
        conc_differs as u8 as f64,
        1.0,
        conc_differs,
        "FovConc changes".into(),
    );

    let raw = first_source(cfg)?;
    let n_probe = if opts.quick { 5 } else { 20 };
    let reports = covariance_reports(cfg, &raw, n_probe)?;
    let worst = reports
        .iter()
        .map(|r| r.normalized() / r.interpolation_floor)
        .fold(0.0, f64::max);
    for r in &reports {
        rep.residuals
            .push(format!("covariance,{}", r.csv_row().replace(',', ";")));
    }
    rep.push(
        "covariance",
        worst,
        3.0,
        worst < 3.0,
        format!("worst normalised residual / interpolation floor over {n_probe} digits, all depths"),
    );

    let split = Split::Range {
        source: raw.split,
        start: 0,
        end: 32,
    };
    let spec = ScaleSpec::log_uniform(1.0, 4.0, 9);
    let a = opts.out_dir.join("determinism_a.mnls");
    let b = opts.out_dir.join("determinism_b.mnls");
    let (_, sha_a) = generate_dataset(&raw, &spec, &split, cfg.data.out_size, &a)?;
    let (_, sha_b) = generate_dataset(&raw, &spec, &split, cfg.data.out_size, &b)?;
    let same = sha_a == sha_b && sha256_file(&b)? == sha_a;
    rep.push(
        "dataset_determinism",
        same as u8 as f64,
        1.0,
        same,
        format!("sha256 {sha_a}"),
    );
    let mid = sharpen(128.0);
    rep.push("arctan_midpoint", mid, 0.0, mid == 0.0, "sharpen(128) == 0".into());
    let sig = smoothing_sigma(2.0);
    rep.push("smoothing_sigma", sig, 1.75, sig == 1.75, "sigma(2) == 1.75".into());
    std::fs::remove_file(&a).ok();
    std::fs::remove_file(&b).ok();

    std::fs::write(opts.out_dir.join("report.txt"), rep.render())?;
    let mut csv = String::from("suite,key,value\n");
    for r in &rep.residuals {
        csv.push_str(r);
        csv.push('\n');
    }
    std::fs::write(opts.out_dir.join("residuals.csv"), csv)?;
    Ok(rep)
}
