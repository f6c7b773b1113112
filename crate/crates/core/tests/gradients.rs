use lanecast::models::{GatedBlock, ResidualUnit};
use lanecast::tensor::{
    forward, gradcheck, init_layer, random_projection, temporal_conv_inject, BatchNormHyper, Conv1dHyper, Conv2dHyper,
    GradCheckOptions, Hyper, LinearHyper, Mode, ParamStore, PoolSpec, Tensor, TemporalLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn assert_ok(name: &str, r: lanecast::tensor::GradCheckReport) {
    assert!(r.max_rel_error <= TOL, "{name}: rel error {} at {}", r.max_rel_error, r.worst);
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let h = Conv2dHyper {
        in_ch: 3,
        out_ch: 4,
        kernel: 3,
        stride: 2,
        padding: 1,
    };
    let l = init_layer(&mut store, "c", Hyper::Conv2d(h), &mut rng);
    for v in store.get_mut(l.bias).data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let r = gradcheck(&store, &[rand_tensor(&[2, 3, 7, 6], 2)], GradCheckOptions::default(), &|t, s, x| {
        let y = forward(t, s, &l, x[0], Mode::Train)?;
        random_projection(t, y, 9)
    })
    .unwrap();
    assert_ok("conv2d", r);
}

#[test]
fn temporal_conv_gradients_both_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let l = init_layer(&mut store, "t", Hyper::Conv1dTemporal(Conv1dHyper::same(3, 2)), &mut rng);
    let r = gradcheck(&store, &[rand_tensor(&[2, 3, 5], 4)], GradCheckOptions::default(), &|t, s, x| {
        let y = forward(t, s, &l, x[0], Mode::Train)?;
        random_projection(t, y, 5)
    })
    .unwrap();
    assert_ok("conv1d (B×C×T)", r);

    let mut store = ParamStore::new();
    let l = init_layer(&mut store, "t", Hyper::Conv1dTemporal(Conv1dHyper::same(3, 3)), &mut rng);
    let r = gradcheck(&store, &[rand_tensor(&[2 * 4, 3, 2, 3], 6)], GradCheckOptions::default(), &|t, s, x| {
        let y = temporal_conv_inject(t, s, &l, x[0], 4)?;
        random_projection(t, y, 7)
    })
    .unwrap();
    assert_ok("conv1d (folded)", r);
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let l = init_layer(&mut store, "fc", Hyper::Linear(LinearHyper { inputs: 7, outputs: 4 }), &mut rng);
    let r = gradcheck(&store, &[rand_tensor(&[3, 7], 8)], GradCheckOptions::default(), &|t, s, x| {
        let y = forward(t, s, &l, x[0], Mode::Train)?;
        random_projection(t, y, 1)
    })
    .unwrap();
    assert_ok("linear", r);
}

#[test]
fn batchnorm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let l = init_layer(&mut store, "bn", Hyper::BatchNorm(BatchNormHyper::new(3)), &mut rng);
    for id in [l.weight, l.bias] {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    for mode in [Mode::Train, Mode::Eval] {
        let r = gradcheck(&store, &[rand_tensor(&[4, 3, 2, 3], 9)], GradCheckOptions::default(), &|t, s, x| {
            let y = forward(t, s, &l, x[0], mode)?;
            random_projection(t, y, 2)
        })
        .unwrap();
        assert_ok(&format!("batchnorm {mode:?}"), r);
    }
}

#[test]
fn maxpool_relu_xent_gradients() {
    let store = ParamStore::new();
    let r = gradcheck(&store, &[rand_tensor(&[2, 2, 7, 7], 10)], GradCheckOptions::default(), &|t, _, x| {
        let y = t.max_pool2d(x[0], PoolSpec::default())?;
        random_projection(t, y, 3)
    })
    .unwrap();
    assert_ok("maxpool", r);
    let r = gradcheck(&store, &[rand_tensor(&[2, 2, 5, 5], 13)], GradCheckOptions::default(), &|t, _, x| {
        let y = t.max_pool2d(
            x[0],
            PoolSpec {
                kernel: 3,
                stride: 2,
                padding: 1,
            },
        )?;
        random_projection(t, y, 3)
    })
    .unwrap();
    assert_ok("maxpool padded", r);
    let r = gradcheck(&store, &[rand_tensor(&[3, 11], 11)], GradCheckOptions::default(), &|t, _, x| {
        let y = t.relu(x[0])?;
        random_projection(t, y, 4)
    })
    .unwrap();
    assert_ok("relu", r);
    let r = gradcheck(&store, &[rand_tensor(&[4, 3], 12).map_scale(3.0)], GradCheckOptions::default(), &|t, _, x| {
        Ok(t.softmax_cross_entropy(x[0], &[0, 2, 1, 2])?.0)
    })
    .unwrap();
    assert_ok("softmax-xent", r);
}

#[test]
fn pooling_and_concat_gradients() {
    let store = ParamStore::new();
    let r = gradcheck(
        &store,
        &[rand_tensor(&[6, 2, 3, 3], 14), rand_tensor(&[2, 4], 15)],
        GradCheckOptions::default(),
        &|t, _, x| {
            let p = t.global_avg_pool(x[0], 3)?;
            let c = t.concat_features(&[p, x[1]])?;
            random_projection(t, c, 6)
        },
    )
    .unwrap();
    assert_ok("avg-pool/concat", r);
}

fn gated_block_check(in_ch: usize, out_ch: usize, stride: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let block = GatedBlock::build(&mut store, &mut rng, "b", in_ch, out_ch, stride);
    let shape = [3, in_ch, 6, 6];
    let r = gradcheck(
        &store,
        &[rand_tensor(&shape, seed + 1), rand_tensor(&shape, seed + 2)],
        GradCheckOptions {
            max_probes: 16,
            ..GradCheckOptions::default()
        },
        &|t, s, x| {
            let (a, m) = block.forward(t, s, x[0], x[1], Mode::Train)?;
            let la = random_projection(t, a, 7)?;
            let lm = random_projection(t, m, 8)?;
            t.add(la, lm)
        },
    )
    .unwrap();
    assert!(r.input_grads[1].iter().any(|g| g.abs() > 1e-8), "motion input gradient vanished");
    assert_ok("gated block", r);
}

#[test]
fn gated_block_gradients() {
    gated_block_check(3, 3, 1, 20);
    gated_block_check(3, 4, 2, 30);
}

#[test]
fn appearance_loss_reaches_motion_input_through_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut store = ParamStore::new();
    let unit = ResidualUnit::build(&mut store, &mut rng, "a", 2, 2, 1);
    let r = gradcheck(
        &store,
        &[rand_tensor(&[2, 2, 5, 5], 41), rand_tensor(&[2, 2, 5, 5], 42)],
        GradCheckOptions::default(),
        &|t, s, x| {
            let a = unit.forward(t, s, x[0], Some(x[1]), Mode::Train)?;
            random_projection(t, a, 9)
        },
    )
    .unwrap();
    assert!(r.input_grads[1].iter().any(|g| g.abs() > 1e-8));
    assert_ok("gated unit", r);
}

trait Scale {
    fn map_scale(self, k: f64) -> Self;
}

impl Scale for Tensor<f64> {
    fn map_scale(mut self, k: f64) -> Self {
        self.data_mut().iter_mut().for_each(|v| *v *= k);
        self
    }
}

#[test]
fn temporal_layout_folded_matches_direct() {
    // Folded and channels-time layouts agree on the same data.
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut store = ParamStore::<f64>::new();
    let l = init_layer(&mut store, "t", Hyper::Conv1dTemporal(Conv1dHyper::same(2, 2)), &mut rng);
    let (b, time, c) = (2, 4, 2);
    let folded = rand_tensor(&[b * time, c, 1, 1], 51);
    let mut tape = lanecast::tensor::Tape::no_grad();
    let x = tape.input(&folded).unwrap();
    let w = tape.param(&store, l.weight).unwrap();
    let bias = tape.param(&store, l.bias).unwrap();
    let y = tape.temporal_conv(x, w, bias, TemporalLayout::Folded { time }, 1).unwrap();
    let ct = Tensor::from_fn(&[b, c, time], |i| {
        let (bi, ci, ti) = (i / (c * time), (i / time) % c, i % time);
        folded.data()[(bi * time + ti) * c + ci]
    });
    let x2 = tape.input(&ct).unwrap();
    let y2 = tape.temporal_conv(x2, w, bias, TemporalLayout::ChannelsTime, 1).unwrap();
    let (v1, v2) = (tape.value(y).to_vec(), tape.value(y2).to_vec());
    for bi in 0..b {
        for ti in 0..time {
            for ci in 0..c {
                let a = v1[(bi * time + ti) * c + ci];
                let d = v2[(bi * c + ci) * time + ti];
                assert!((a - d).abs() < 1e-12);
            }
        }
    }
}
