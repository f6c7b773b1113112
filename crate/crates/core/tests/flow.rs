use lanecast::flow::{dense_flow, polynomial_expansion, FlowEstimator, FlowField, FlowParams};
use lanecast::tensor::Tensor;

fn texture(x: f32, y: f32) -> f32 {
    0.5 + 0.15 * (0.31 * x + 0.17 * y).sin()
        + 0.12 * (0.23 * y - 0.11 * x).cos()
        + 0.1 * (0.47 * x).sin() * (0.39 * y).cos()
        + 0.08 * (0.05 * (x - 40.0) * (y - 70.0) / 10.0).sin()
}

fn frame(w: usize, h: usize, dx: f32, dy: f32) -> Tensor<f32> {
    Tensor::from_fn(&[1, h, w], |i| texture((i % w) as f32 - dx, (i / w) as f32 - dy))
}

fn median_error(f: &FlowField, dx: f32, dy: f32, margin: usize) -> f32 {
    let mut errs = Vec::new();
    for y in margin..f.height - margin {
        for x in margin..f.width - margin {
            let (u, v) = f.at(x, y);
            errs.push(((u - dx).powi(2) + (v - dy).powi(2)).sqrt());
        }
    }
    errs.sort_by(f32::total_cmp);
    errs[errs.len() / 2]
}

#[test]
fn quadratic_in_x_expansion() {
    let (w, h) = (40, 30);
    let t = Tensor::from_fn(&[1, h, w], |i| ((i % w) as f32).powi(2));
    let e = polynomial_expansion(&t, 5, 1.1).unwrap();
    for y in 6..h - 6 {
        for x in 6..w - 6 {
            let a = e.a(x, y);
            let b = e.b(x, y);
            let x0 = x as f32;
            assert!((a[0][0] - 1.0).abs() < 1e-3, "A00 = {}", a[0][0]);
            assert!(a[0][1].abs() < 1e-3 && a[1][1].abs() < 1e-3);
            assert!((b[0] - 2.0 * x0).abs() < 1e-2 && b[1].abs() < 1e-3);
            assert!((e.c(x, y) - x0 * x0).abs() < 1e-1 * (1.0 + x0));
        }
    }
}

#[test]
fn identical_frames_have_zero_flow() {
    let a = frame(64, 64, 0.0, 0.0);
    let f = dense_flow(&a, &a, 3, 3).unwrap();
    assert!(f.max_magnitude() < 1e-4, "max {}", f.max_magnitude());
}

#[test]
fn unit_translation() {
    let a = frame(64, 64, 0.0, 0.0);
    let b = frame(64, 64, 1.0, 0.0);
    let f = dense_flow(&a, &b, 3, 3).unwrap();
    assert!(median_error(&f, 1.0, 0.0, 8) < 0.1);
}

#[test]
fn larger_translations_on_112() {
    for (dx, dy) in [(3.0, 0.0), (-4.0, 2.0)] {
        let a = frame(112, 112, 0.0, 0.0);
        let b = frame(112, 112, dx, dy);
        let f = dense_flow(&a, &b, 3, 3).unwrap();
        let m = median_error(&f, dx, dy, 10);
        assert!(m < 0.5, "shift ({dx},{dy}) median error {m}");
    }
}

#[test]
fn reverse_flow_is_negated() {
    let a = frame(96, 96, 0.0, 0.0);
    let b = frame(96, 96, 2.0, -1.0);
    let est = FlowEstimator::new(FlowParams::default()).unwrap();
    let fw = est.flow(&a, &b).unwrap().0;
    let bw = est.flow(&b, &a).unwrap().0;
    let mut errs: Vec<f32> = (0..fw.u.len())
        .map(|i| ((fw.u[i] + bw.u[i]).powi(2) + (fw.v[i] + bw.v[i]).powi(2)).sqrt())
        .collect();
    errs.sort_by(f32::total_cmp);
    assert!(errs[errs.len() / 2] < 0.3);
}

/// Smoothed value noise evaluated at real coordinates, so shifted frames are
/// exact translations of one continuous pattern.
fn noise_texture(seed: u64) -> impl Fn(f32, f32) -> f32 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cell = 6.0f32;
    let g = 40usize;
    let lattice: Vec<f32> = (0..g * g).map(|_| rng.random::<f32>()).collect();
    move |x: f32, y: f32| {
        let (fx, fy) = (x / cell + 10.0, y / cell + 10.0);
        let (ix, iy) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - ix, fy - iy);
        let s = |t: f32| t * t * (3.0 - 2.0 * t);
        let at = |i: f32, j: f32| lattice[(j as usize % g) * g + (i as usize % g)];
        let top = at(ix, iy) * (1.0 - s(tx)) + at(ix + 1.0, iy) * s(tx);
        let bot = at(ix, iy + 1.0) * (1.0 - s(tx)) + at(ix + 1.0, iy + 1.0) * s(tx);
        top * (1.0 - s(ty)) + bot * s(ty)
    }
}

#[test]
fn random_texture_shift_sweep() {
    let tex = noise_texture(7);
    let n = 112;
    let a = Tensor::from_fn(&[1, n, n], |i| tex((i % n) as f32, (i / n) as f32));
    for (dx, dy) in [(5.0, 0.0), (0.0, -5.0), (3.0, 4.0), (-5.0, -2.0), (2.0, 2.0)] {
        let b = Tensor::from_fn(&[1, n, n], |i| tex((i % n) as f32 - dx, (i / n) as f32 - dy));
        let f = dense_flow(&a, &b, 3, 3).unwrap();
        let m = median_error(&f, dx, dy, 8);
        eprintln!("shift ({dx},{dy}) median error {m}");
        assert!(m < 0.5, "shift ({dx},{dy}) median error {m}");
    }
}
