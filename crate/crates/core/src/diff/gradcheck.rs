//! Central finite-difference checks for `f64` graphs.

use super::{DiffError, Graph, Tensor, Var};

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` around `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error of the backward pass against central differences, one
/// entry per input. `build` maps the input leaves to a scalar loss.
pub fn check_gradients(
    inputs: &[Tensor<f64>],
    h: f64,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, DiffError>,
) -> Result<Vec<f64>, DiffError> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss);

    let eval = |ts: &[Tensor<f64>]| -> Result<f64, DiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };
    eval(inputs)?;

    let mut errors = Vec::with_capacity(inputs.len());
    for (i, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).map_or_else(|| vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        let mut probe = inputs.to_vec();
        let numeric = numeric_gradient(inputs[i].data(), h, |x| {
            probe[i].data_mut().copy_from_slice(x);
            eval(&probe).expect("shapes validated above")
        });
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}
