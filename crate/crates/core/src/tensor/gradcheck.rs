//! Central finite-difference verification of tape gradients at `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Denominator floor of the relative error
    /// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    /// Biases feeding batch norm have zero true gradient; the floor keeps
    /// finite-difference noise on them from reading as error.
    pub floor: f64,
    /// Coordinates probed per tensor; larger tensors are subsampled.
    pub max_probes: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            floor: 1e-5,
            max_probes: 24,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the tensor (`input{i}` or parameter name) with the worst error.
    pub worst: String,
    pub probes: usize,
    /// Analytic input gradients, one per input.
    pub input_grads: Vec<Vec<f64>>,
}

type Build<'a> = dyn Fn(&mut Tape<f64>, &mut ParamStore<f64>, &[Var]) -> Result<Var> + 'a;

fn eval(store: &ParamStore<f64>, inputs: &[Tensor<f64>], build: &Build) -> Result<f64> {
    let mut s = store.clone();
    let mut tape = Tape::no_grad();
    let vars = inputs.iter().map(|t| tape.input(t)).collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, &mut s, &vars)?;
    Ok(tape.value(loss)[0])
}

/// Checks the gradients of the scalar produced by `build` with respect to
/// every input and every trainable parameter in `store`.
pub fn gradcheck(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    opts: GradCheckOptions,
    build: &Build,
) -> Result<GradCheckReport> {
    let mut s = store.clone();
    s.clear_grads();
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.input(&t.clone().with_requires_grad(true)))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, &mut s, &vars)?;
    tape.backward(loss, &mut s)?;
    let input_grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probes = |n: usize| -> Vec<usize> {
        if n <= opts.max_probes {
            (0..n).collect()
        } else {
            (0..opts.max_probes).map(|_| rng.random_range(0..n)).collect()
        }
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        probes: 0,
        input_grads: input_grads.clone(),
    };
    let mut record = |name: &str, analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
        report.probes += 1;
        if rel > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = name.to_string();
        }
    };

    for (i, t) in inputs.iter().enumerate() {
        for k in probes(t.numel()) {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += opts.eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= opts.eps;
            let num = (eval(store, &plus, build)? - eval(store, &minus, build)?) / (2.0 * opts.eps);
            record(&format!("input{i}"), input_grads[i][k], num);
        }
    }
    for id in store.ids().collect::<Vec<_>>() {
        if !store.get(id).requires_grad() {
            continue;
        }
        let analytic = s
            .get(id)
            .grad()
            .ok_or_else(|| Error::Contract(format!("no gradient for '{}'", store.entry(id).name)))?
            .to_vec();
        let name = store.entry(id).name.clone();
        for k in probes(analytic.len()) {
            let mut p = store.clone();
            p.get_mut(id).data_mut()[k] += opts.eps;
            let mut m = store.clone();
            m.get_mut(id).data_mut()[k] -= opts.eps;
            let num = (eval(&p, inputs, build)? - eval(&m, inputs, build)?) / (2.0 * opts.eps);
            record(&name, analytic[k], num);
        }
    }
    Ok(report)
}

/// `Σ r ⊙ x` for a fixed random `r`: turns any output into a scalar whose
/// gradient exercises every output coordinate.
pub fn random_projection<T: Real>(tape: &mut Tape<T>, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_fn(tape.shape(x), |_| T::of(rng.random_range(-1.0..1.0)));
    let rv = tape.input(&r)?;
    let p = tape.mul(x, rv)?;
    tape.sum(p)
}
