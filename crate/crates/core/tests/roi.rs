use lanecast::roi::{crop_pad, extract_roi, resize_bilinear, square_box, Contour, RoiSpec};
use lanecast::tensor::Tensor;
use proptest::prelude::*;

const W: usize = 160;
const H: usize = 120;

/// Strictly positive pixel values so padding zeros are unambiguous.
fn indexed_image() -> Tensor<f32> {
    Tensor::from_fn(&[2, H, W], |i| 1.0 + i as f32)
}

fn fixture_centers() -> Vec<(f64, f64)> {
    let mut v = vec![
        (0.5, 0.5),
        (W as f64 - 0.5, 0.5),
        (0.5, H as f64 - 0.5),
        (W as f64 - 0.5, H as f64 - 0.5),
        (W as f64 / 2.0 + 0.5, H as f64 / 2.0 + 0.5),
    ];
    for x in (0..W).step_by(23) {
        for y in (0..H).step_by(17) {
            v.push((x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    v
}

#[test]
fn roi_geometry_fixture_grid() {
    let img = indexed_image();
    let src = img.data();
    for &(cx, cy) in &fixture_centers() {
        for &(bw, bh) in &[(10.0, 6.0), (7.0, 13.0), (20.0, 20.0), (31.0, 4.0)] {
            let c = Contour::rectangle(3, cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).unwrap();
            for k in 1..=4u32 {
                let b = square_box(&c, k).unwrap();
                assert_eq!(b.side, k as f64 * f64::max(bw, bh));
                assert_eq!(b.center, (cx, cy));

                let crop = crop_pad(&img, &b).unwrap();
                let (x0, y0, s) = b.pixel_window();
                assert_eq!(crop.image.shape(), &[2, s, s]);
                assert!((x0 as f64 + s as f64 / 2.0 - cx).abs() <= 0.5);
                assert!((y0 as f64 + s as f64 / 2.0 - cy).abs() <= 0.5);
                let out = crop.image.data();
                for ch in 0..2 {
                    for oy in 0..s {
                        for ox in 0..s {
                            let (sx, sy) = (x0 + ox as i64, y0 + oy as i64);
                            let got = out[(ch * s + oy) * s + ox];
                            if (0..W as i64).contains(&sx) && (0..H as i64).contains(&sy) {
                                assert_eq!(got, src[(ch * H + sy as usize) * W + sx as usize]);
                            } else {
                                assert_eq!(got, 0.0);
                            }
                        }
                    }
                }
                let full = extract_roi(&img, &c, RoiSpec::new(k, 112).unwrap()).unwrap();
                assert_eq!(full.image.shape(), &[2, 112, 112]);
            }
        }
    }
}

#[test]
fn marked_center_lands_at_output_center() {
    for &(cx, cy) in &fixture_centers() {
        let mut img = Tensor::<f32>::zeros(&[1, H, W]);
        img.data_mut()[cy as usize * W + cx as usize] = 1.0;
        let c = Contour::rectangle(0, cx - 12.0, cy - 9.0, cx + 12.0, cy + 9.0).unwrap();
        for k in 1..=4u32 {
            let b = square_box(&c, k).unwrap();
            let (x0, y0, s) = b.pixel_window();
            let out = extract_roi(&img, &c, RoiSpec::new(k, 112).unwrap()).unwrap().image;
            let (mut m, mut mx, mut my) = (0.0f64, 0.0f64, 0.0f64);
            for (i, &v) in out.data().iter().enumerate() {
                m += v as f64;
                mx += v as f64 * ((i % 112) as f64 + 0.5);
                my += v as f64 * ((i / 112) as f64 + 0.5);
            }
            assert!(m > 0.0);
            // Back to source pixel units.
            let r = s as f64 / 112.0;
            let (sx, sy) = (x0 as f64 + mx / m * r, y0 as f64 + my / m * r);
            assert!((sx - cx).abs() <= 0.5 && (sy - cy).abs() <= 0.5, "({sx},{sy}) vs ({cx},{cy}) k={k}");
        }
    }
}

fn smooth(x: f32, y: f32) -> f32 {
    0.5 + 0.25 * (0.05 * x + 0.3).sin() + 0.2 * (0.04 * y - 0.03 * x).cos()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_output_is_always_square(cx in -80.0f64..240.0, cy in -80.0f64..200.0,
                                     bw in 1.0f64..60.0, bh in 1.0f64..60.0,
                                     k in 1u32..=4, size in 8usize..130) {
        let img = Tensor::full(&[3, H, W], 0.7f32);
        let c = Contour::rectangle(0, cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).unwrap();
        let out = extract_roi(&img, &c, RoiSpec::new(k, size).unwrap()).unwrap();
        prop_assert_eq!(out.image.shape(), &[3, size, size]);
        prop_assert!(out.image.data().iter().all(|&v| (0.0..=0.7 + 1e-6).contains(&v)));
    }

    #[test]
    fn wider_context_nests_narrower(cx in 70.0f64..90.0, cy in 50.0f64..70.0,
                                    bw in 8.0f64..20.0, bh in 8.0f64..20.0, k in 1u32..=3) {
        const OUT: usize = 120;
        let img = Tensor::from_fn(&[1, H, W], |i| smooth((i % W) as f32, (i / W) as f32));
        let c = Contour::rectangle(0, cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).unwrap();
        let narrow = extract_roi(&img, &c, RoiSpec::new(k, OUT).unwrap()).unwrap().image;
        let wide = extract_roi(&img, &c, RoiSpec::new(k + 1, OUT).unwrap()).unwrap().image;
        let inner = OUT * k as usize / (k as usize + 1);
        let off = (OUT - inner) / 2;
        let centre = Tensor::from_fn(&[1, inner, inner], |i| wide.data()[(off + i / inner) * OUT + off + i % inner]);
        let centre = resize_bilinear(&centre, OUT, OUT).unwrap();
        let worst = centre.data().iter().zip(narrow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        prop_assert!(worst < 0.05, "max difference {}", worst);
    }
}
