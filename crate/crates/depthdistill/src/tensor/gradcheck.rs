//! Finite-difference gradient checking.
//!
//! Compares tape gradients against central differences in f64. The
//! numeric side re-runs the forward closure with single elements
//! perturbed in place, so the closure must be deterministic and must
//! read parameter data fresh on every call.

use super::{Tape, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
/// Relative error floor; see the denominator in `rel_err`.
pub const DENOM_FLOOR: f64 = 1e-8;
/// Differences below this are within central-difference roundoff noise
/// (~|loss| * machine-eps / eps) and count as agreement.
pub const ABS_NOISE_FLOOR: f64 = 1e-7;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    if (analytic - numeric).abs() < ABS_NOISE_FLOOR {
        return 0.0;
    }
    let denom = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamReport>,
    pub max_rel_err: f64,
    pub worst_param: String,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.per_param {
            writeln!(
                f,
                "  {:<40} max rel err {:.3e} (elem {}, analytic {:.6e}, numeric {:.6e})",
                p.name, p.max_rel_err, p.worst_index, p.analytic, p.numeric
            )?;
        }
        write!(f, "  worst: {} ({:.3e})", self.worst_param, self.max_rel_err)
    }
}

/// Check d(loss)/d(param) for every named parameter against central
/// differences with the given epsilon.
///
/// `f` must build the scalar loss on the tape it is handed. Parameters
/// are perturbed element-wise between calls.
pub fn gradcheck<F>(params: &[(String, Tensor<f64>)], f: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape<f64>) -> Result<Tensor<f64>>,
{
    for (name, p) in params {
        if !p.requires_grad() {
            return Err(Error::config(format!("gradcheck param '{name}' does not require grad")));
        }
        p.zero_grad();
    }

    // Analytic gradients from one recorded pass.
    let tape = Tape::new();
    let loss = f(&tape)?;
    if loss.numel() != 1 {
        return Err(Error::shape(format!("gradcheck loss must be scalar, got {}", loss.shape())));
    }
    if !loss.item().is_finite() {
        return Err(Error::numeric(format!(
            "gradcheck aborted: non-finite loss {} before perturbation",
            loss.item()
        )));
    }
    tape.backward(&loss)?;

    let mut per_param = Vec::with_capacity(params.len());
    for (name, p) in params {
        let analytic = p
            .grad()
            .unwrap_or_else(|| vec![0.0; p.numel()]);
        let mut worst = ParamReport {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..p.numel() {
            let orig = p.data()[i];
            p.data_mut()[i] = orig + eps;
            let up = f(&Tape::inference())?.item();
            p.data_mut()[i] = orig - eps;
            let down = f(&Tape::inference())?.item();
            p.data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::numeric(format!(
                    "gradcheck aborted: non-finite loss while perturbing {name}[{i}]"
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let e = rel_err(analytic[i], numeric);
            if e > worst.max_rel_err {
                worst.max_rel_err = e;
                worst.worst_index = i;
                worst.analytic = analytic[i];
                worst.numeric = numeric;
            }
        }
        per_param.push(worst);
        p.zero_grad();
    }

    let (max_rel_err, worst_param) = per_param
        .iter()
        .map(|p| (p.max_rel_err, p.name.clone()))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((0.0, String::from("<none>")));
    Ok(GradCheckReport { per_param, max_rel_err, worst_param })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ops, Rng};

    #[test]
    fn sum_of_squares_matches_analytic_tightly() {
        // f(x) = sum(x^2), grad = 2x; FD error is O(eps^2).
        let mut rng = Rng::new(3);
        let x = Tensor::<f64>::randn([7], 1.0, &mut rng).requires_grad_(true);
        let params = vec![("x".to_string(), x.clone())];
        let report = gradcheck(
            &params,
            |tape| {
                let sq = ops::mul(tape, &x, &x)?;
                ops::sum_all(tape, &sq)
            },
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-8, "{report}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // Deliberately non-recorded dependency: detach breaks the graph,
        // so analytic grad is 0 while numeric is not.
        let x = Tensor::<f64>::from_vec([2], vec![0.5, -0.25]).unwrap().requires_grad_(true);
        let params = vec![("x".to_string(), x.clone())];
        let report = gradcheck(
            &params,
            |tape| {
                let frozen = x.detach();
                let sq = ops::mul(tape, &frozen, &frozen)?;
                let s = ops::sum_all(tape, &sq)?;
                // keep x in the graph weakly so backward has a path
                let zero = ops::scale(tape, &ops::sum_all(tape, &x)?, 0.0);
                ops::add(tape, &s, &zero)
            },
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_rel_err > 1e-2, "should flag the broken path: {report}");
    }

    #[test]
    fn aborts_on_non_finite_loss() {
        let x = Tensor::<f64>::from_vec([1], vec![f64::NAN]).unwrap().requires_grad_(true);
        let params = vec![("x".to_string(), x.clone())];
        let err = gradcheck(&params, |tape| ops::sum_all(tape, &x), DEFAULT_EPS).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn conv_sqrt_and_softmax_pass_fd() {
        let mut rng = Rng::new(5);
        let x = Tensor::<f64>::randn([2, 4, 5], 0.5, &mut rng).requires_grad_(true);
        let w = Tensor::<f64>::randn([3, 2, 3, 3], 0.5, &mut rng).requires_grad_(true);
        let b = Tensor::<f64>::randn([3], 0.5, &mut rng).requires_grad_(true);
        let params = vec![
            ("x".to_string(), x.clone()),
            ("w".to_string(), w.clone()),
            ("b".to_string(), b.clone()),
        ];
        let report = gradcheck(
            &params,
            |tape| {
                let y = ops::conv2d(tape, &x, &w, Some(&b), 1, 1)?;
                let sm = ops::softmax(tape, &y, 0)?;
                // keep away from sqrt(0): add a positive offset
                let pos = ops::add_scalar(tape, &ops::mul(tape, &sm, &sm)?, 0.1);
                let r = ops::sqrt(tape, &pos)?;
                ops::sum_all(tape, &r)
            },
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }
}
