//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::optim::Parameter;
use super::rng::RngStream;
use super::GradError;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub checked: usize,
    pub worst_rel_err: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare the gradients produced by `loss_and_grad` against central
/// differences of its loss value.
///
/// `loss_and_grad` must compute the loss for the current parameter values and
/// accumulate the corresponding gradients into `Parameter::grad`. It must be
/// deterministic in the parameters (dropout off or a frozen mask), otherwise
/// the difference quotients are meaningless.
///
/// When `max_coords` is given and the heads have more coordinates than that,
/// a seeded random subsample is checked instead of every coordinate.
///
/// Relative error is |analytic − numeric| / max(1, |analytic|). The first
/// coordinate exceeding `tol` aborts with a diagnostic; otherwise the worst
/// offender is reported.
pub fn finite_diff_check<F>(
    params: &mut [Parameter],
    mut loss_and_grad: F,
    eps: f64,
    tol: f64,
    max_coords: Option<usize>,
    rng: &mut RngStream,
) -> Result<FiniteDiffReport, GradError>
where
    F: FnMut(&mut [Parameter]) -> Result<f64, GradError>,
{
    if eps <= 0.0 {
        return Err(GradError::InvalidConfig(format!(
            "finite-difference eps must be positive, got {eps}"
        )));
    }

    for p in params.iter_mut() {
        p.zero_grad();
    }
    loss_and_grad(params)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().to_vec()).collect();

    // flattened (param, coord) index space
    let total: usize = params.iter().map(|p| p.value.len()).sum();
    let coords: Vec<usize> = match max_coords {
        Some(m) if total > m => sample(rng, total, m).into_iter().collect(),
        _ => (0..total).collect(),
    };

    let sizes: Vec<usize> = params.iter().map(|p| p.value.len()).collect();
    let locate = move |flat: usize| -> (usize, usize) {
        let mut rest = flat;
        for (pi, &size) in sizes.iter().enumerate() {
            if rest < size {
                return (pi, rest);
            }
            rest -= size;
        }
        unreachable!("flat coordinate out of range")
    };

    let mut worst = FiniteDiffReport {
        checked: coords.len(),
        worst_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for flat in coords {
        let (pi, ci) = locate(flat);
        let orig = params[pi].value.data()[ci];

        params[pi].value.data_mut()[ci] = orig + eps;
        let plus = loss_and_grad(params)?;
        params[pi].value.data_mut()[ci] = orig - eps;
        let minus = loss_and_grad(params)?;
        params[pi].value.data_mut()[ci] = orig;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[pi][ci];
        let rel = (a - numeric).abs() / a.abs().max(1.0);
        if rel > worst.worst_rel_err {
            worst.worst_rel_err = rel;
            worst.worst_param = params[pi].name.clone();
            worst.worst_coord = ci;
            worst.worst_analytic = a;
            worst.worst_numeric = numeric;
        }
        if rel > tol {
            return Err(GradError::GradCheckFailed {
                param: params[pi].name.clone(),
                coord: ci,
                analytic: a,
                numeric,
                rel_err: rel,
                tol,
            });
        }
    }

    // leave grads in the analytic state, not the last perturbation's
    for (p, g) in params.iter_mut().zip(&analytic) {
        p.grad.data_mut().copy_from_slice(g);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::graph::Graph;
    use crate::gradcore::tensor::Tensor;

    #[test]
    fn quadratic_passes() {
        // loss = w², w = 3 → analytic 6, central diff 6 within 1e-10
        let mut params = vec![Parameter::new("w", Tensor::scalar(3.0))];
        let mut rng = RngStream::new(0, "fd");
        let report = finite_diff_check(
            &mut params,
            |ps| {
                let g = Graph::new();
                let w = g.leaf(ps[0].value.clone());
                let loss = g.mul(w, w)?;
                g.backward(loss)?;
                ps[0].accumulate_grad(&g.grad(w));
                g.scalar_value(loss)
            },
            1e-5,
            1e-10,
            None,
            &mut rng,
        )
        .unwrap();
        assert!((params[0].grad.data()[0] - 6.0).abs() < 1e-12);
        assert!(report.worst_rel_err <= 1e-10);
    }

    #[test]
    fn constant_loss_passes_with_zero_grads() {
        let mut params = vec![Parameter::new("w", Tensor::row(vec![1.0, -2.0]))];
        let mut rng = RngStream::new(0, "fd");
        let report = finite_diff_check(
            &mut params,
            |_| Ok(4.25),
            1e-5,
            1e-8,
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.worst_rel_err, 0.0);
        assert_eq!(params[0].grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn wrong_gradient_is_caught_with_diagnostics() {
        let mut params = vec![Parameter::new("w", Tensor::scalar(1.0))];
        let mut rng = RngStream::new(0, "fd");
        let err = finite_diff_check(
            &mut params,
            |ps| {
                // claims gradient 1 for loss w² (true gradient 2w = 2)
                ps[0].grad.data_mut()[0] = 1.0;
                Ok(ps[0].value.data()[0].powi(2))
            },
            1e-5,
            1e-4,
            None,
            &mut rng,
        )
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains('w') && msg.contains("coordinate 0"), "{msg}");
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let mut params = vec![];
        let mut rng = RngStream::new(0, "fd");
        assert!(
            finite_diff_check(&mut params, |_| Ok(0.0), 0.0, 1e-4, None, &mut rng).is_err()
        );
    }
}
