use scalechan::scalespace::{
    blur, check_filter_vs_image_scaling, directional_derivative_kernel, gaussian_derivative_1d, hermite, rescale_image,
    scale_normalized_derivative, GaussianMode, GridImage, Interpolation, ScaleParameter,
};

fn gaussian_image(size: usize, std: f64) -> GridImage<f64> {
    GridImage::from_fn(size, size, |x, y| (-(x * x + y * y) / (2.0 * std * std)).exp())
}

// Polynomials as coefficient vectors, lowest degree first.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[test]
fn hermite_matches_symbolic_derivatives_of_gaussian() {
    // d/dx [p(x) e^{-x²/2}] = (p'(x) - x p(x)) e^{-x²/2}, and
    // He_n(x) e^{-x²/2} = (-1)^n d^n/dx^n e^{-x²/2}.
    let mut p = vec![1.0];
    for n in 0..=6usize {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        for x in -2..=2 {
            let x = x as f64;
            assert_eq!(hermite(n, x), sign * poly_eval(&p, x), "He_{n}({x})");
        }
        let mut deriv: Vec<f64> = p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        deriv.push(0.0);
        let xp = poly_mul(&[0.0, 1.0], &p);
        deriv.resize(xp.len(), 0.0);
        p = deriv.iter().zip(&xp).map(|(a, b)| a - b).collect();
    }
}

#[test]
fn impulse_blur_is_sampled_gaussian() {
    let size = 33;
    let mut img = GridImage::<f64>::zeros(size, size);
    img.pixels_mut()[16 * size + 16] = 1.0;
    let sigma: f64 = 2.0;
    let out = blur(&img, sigma, GaussianMode::Sampled);
    let r = (4.0 * sigma).ceil() as i32 + 1;
    let norm: f64 = (-r..=r).map(|u| (-(u * u) as f64 / (2.0 * sigma * sigma)).exp()).sum();
    let expected = GridImage::<f64>::from_fn(size, size, |x, y| {
        if x.abs() > r as f64 || y.abs() > r as f64 {
            0.0
        } else {
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (norm * norm)
        }
    });
    assert!(out.residual(&expected).0 < 1e-10);
}

#[test]
fn first_derivative_ramp_response() {
    let size = 48;
    let ramp = GridImage::<f64>::from_fn(size, size, |x, _| x);
    for &sigma in &[1.0, 1.5, 2.5] {
        let k = gaussian_derivative_1d::<f64>(1, sigma);
        let r = k.radius();
        let dx = scale_normalized_derivative(&ramp, (1, 0), ScaleParameter::new(sigma, 0.0).unwrap());
        for i in r..size - r {
            for j in r..size - r {
                assert!(
                    (dx.get(i, j) - 1.0).abs() < 1e-3,
                    "sigma {sigma} at ({i},{j}): {}",
                    dx.get(i, j)
                );
            }
        }
    }
}

#[test]
fn second_derivative_of_parabola() {
    // ∂xx of x²/2 is 1 in the interior.
    let size = 48;
    let img = GridImage::<f64>::from_fn(size, size, |x, _| 0.5 * x * x);
    let sigma = 2.0;
    let r = gaussian_derivative_1d::<f64>(2, sigma).radius();
    let out = scale_normalized_derivative(&img, (2, 0), ScaleParameter::new(sigma, 0.0).unwrap());
    for i in r..size - r {
        for j in r..size - r {
            assert!((out.get(i, j) - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn laplacian_scale_selection() {
    let step = 2f64.powf(0.25);
    for &sigma0 in &[2.0f64, 3.0, 4.0, 6.0] {
        let size = 160;
        let blob = gaussian_image(size, sigma0);
        let mut best = (0.0, 0.0);
        for k in 0..=14 {
            let sigma = 2f64.powf(k as f64 / 4.0);
            let scale = ScaleParameter::new(sigma, 1.0).unwrap();
            let lxx = scale_normalized_derivative(&blob, (2, 0), scale);
            let lyy = scale_normalized_derivative(&blob, (0, 2), scale);
            let c = size / 2;
            // Even size: average the four pixels around the exact center.
            let mut v = 0.0;
            for (i, j) in [(c - 1, c - 1), (c - 1, c), (c, c - 1), (c, c)] {
                v += lxx.get(i, j) + lyy.get(i, j);
            }
            if v.abs() > best.1 {
                best = (sigma, v.abs());
            }
        }
        let ratio = best.0 / sigma0;
        assert!(
            ratio <= step * 1.0001 && ratio >= 1.0 / (step * 1.0001),
            "sigma0 {sigma0} selected {}",
            best.0
        );
    }
}

#[test]
fn directional_closure_second_order() {
    let img = GridImage::<f64>::from_fn(40, 40, |x, y| {
        (0.2 * x + 0.1 * y).sin() * (-(x * x + y * y) / 200.0).exp() + 0.01 * x * y
    });
    let mut state = 0x9e3779b97f4a7c15u64;
    for _ in 0..5 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let theta = (state >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
        let e = (theta.cos(), theta.sin());
        for &sigma in &[1.0, 2.0] {
            let scale = ScaleParameter::new(sigma, 1.0).unwrap();
            let xx = scale_normalized_derivative(&img, (2, 0), scale);
            let xy = scale_normalized_derivative(&img, (1, 1), scale);
            let yy = scale_normalized_derivative(&img, (0, 2), scale);
            let assembled = GridImage::from_pixels(
                40,
                40,
                (0..1600)
                    .map(|p| e.0 * e.0 * xx.pixels()[p] + 2.0 * e.0 * e.1 * xy.pixels()[p] + e.1 * e.1 * yy.pixels()[p])
                    .collect(),
            )
            .unwrap();
            let kernel = directional_derivative_kernel::<f64>(e, 2, sigma).unwrap();
            let direct = kernel.convolve(&img).map(|v| v * scale.normalization(2));
            let (max, _) = assembled.residual(&direct);
            assert!(max < 1e-8, "theta {theta} sigma {sigma}: {max}");
        }
    }
}

#[test]
fn rescale_block_magnification() {
    let mut img = GridImage::<f64>::zeros(8, 8);
    for i in 3..5 {
        for j in 3..5 {
            img.pixels_mut()[i * 8 + j] = 1.0;
        }
    }
    let out = rescale_image(&img, 2.0, Interpolation::Bilinear, (8, 8));
    // Hand-computed stencil: source index u = (j - 3.5) / 2 + 3.5.
    let profile = [0.0, 0.25, 0.75, 1.0, 1.0, 0.75, 0.25, 0.0];
    for i in 0..8 {
        for j in 0..8 {
            assert!((out.get(i, j) - profile[i] * profile[j]).abs() < 1e-15);
        }
    }
    assert_eq!(out.get(3, 3), 1.0);
    assert_eq!(out.get(4, 4), 1.0);
}

#[test]
fn rescale_round_trip() {
    let img = gaussian_image(64, 6.0);
    // Magnify first; shrinking first discards detail bilinear cannot restore.
    for &s in &[2.0, 1.5, 4.0 / 3.0] {
        for interp in [Interpolation::Bilinear, Interpolation::Bicubic] {
            let there = rescale_image(&img, s, interp, (128, 128));
            let back = rescale_image(&there, 1.0 / s, interp, (64, 64));
            let (max, _) = back.residual(&img);
            assert!(max < 0.02, "s {s} {interp:?}: {max}");
        }
    }
}

fn closed_form(size: usize, f_std: f64, h_std: f64) -> GridImage<f64> {
    // Unit-peak Gaussian of std a convolved with a unit-mass Gaussian of std b.
    let var = f_std * f_std + h_std * h_std;
    GridImage::from_fn(size, size, |x, y| {
        f_std * f_std / var * (-(x * x + y * y) / (2.0 * var)).exp()
    })
}

#[test]
fn filter_vs_image_scaling_identity() {
    let f = gaussian_image(32, 3.0);
    let report = check_filter_vs_image_scaling(&f, 1.5, 1.0);
    assert_eq!(report.max_abs, 0.0);
}

#[test]
fn filter_vs_image_scaling_matches_closed_form() {
    for &s in &[2.0, 0.5] {
        let report = check_filter_vs_image_scaling(&gaussian_image(64, 6.0), 2.0, s);
        let exact = closed_form(64, 6.0, 2.0 * s);
        let peak = exact.max_value();
        assert!(report.max_rel() < 1e-3, "s {s}: {}", report.csv_row());
        assert!(report.side_l.residual(&exact).0 < 1e-3 * peak);
        assert!(
            report.side_m.residual(&exact).0 < 1e-3 * peak,
            "s {s}: {}",
            report.side_m.residual(&exact).0 / peak
        );
    }
}

#[test]
fn filter_vs_image_scaling_converges_with_resolution() {
    for &s in &[2.0, 0.5] {
        let coarse = check_filter_vs_image_scaling(&gaussian_image(64, 6.0), 2.0, s);
        let fine = check_filter_vs_image_scaling(&gaussian_image(128, 12.0), 4.0, s);
        assert!(
            fine.max_rel() < coarse.max_rel(),
            "s {s}: {} vs {}",
            fine.max_rel(),
            coarse.max_rel()
        );
    }
}
