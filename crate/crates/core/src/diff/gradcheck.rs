use crate::diff::graph::{Graph, Var};
use crate::diff::tensor::Tensor2;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    pub max_rel_err: f64,
    /// `(param, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub tol: f64,
    pub passed: bool,
    /// Analytic gradients, one per parameter tensor.
    pub analytic: Vec<Tensor2>,
    /// Numeric gradients, one per parameter tensor.
    pub numeric: Vec<Tensor2>,
}

/// Magnitude below which gradients are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`. Coordinates whose gradient is
/// smaller than the floor sit below finite-difference resolution, so they
/// are held to an absolute error of `tol * REL_ERR_FLOOR` instead.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Checks the gradient of the scalar built by `f` with respect to every
/// entry of `params`.
///
/// `f` receives a fresh graph and one leaf per parameter tensor, and must
/// return a `1 x 1` node. It is called once for the analytic gradient and
/// four times per coordinate for the five-point central difference
/// `(8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`, whose truncation
/// error is `O(h^4)`.
pub fn grad_check<F>(mut f: F, params: &[Tensor2], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Config(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor2> = vars.iter().map(|&v| g.grad(v)).collect();
    drop(g);

    let mut eval = |ps: &[Tensor2]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).get(0, 0))
    };

    let mut work: Vec<Tensor2> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_err = 0.0;
    let mut worst = None;
    for p in 0..params.len() {
        let (rows, cols) = params[p].shape();
        let mut num = Tensor2::zeros(rows, cols);
        let mut group_max: f64 = 0.0;
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            let mut at = |offset: f64| -> Result<f64> {
                work[p].data_mut()[k] = orig + offset;
                eval(&work)
            };
            let (up1, down1, up2, down2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
            work[p].data_mut()[k] = orig;
            let estimate = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * h);
            num.data_mut()[k] = estimate;
            let err = relative_error(analytic[p].data()[k], estimate);
            group_max = group_max.max(err);
            if worst.is_none() || err > max_rel_err {
                max_rel_err = err;
                worst = Some((p, k));
            }
        }
        numeric.push(num);
        per_param.push(group_max);
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_err,
        worst,
        tol,
        passed: max_rel_err < tol,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let w = Tensor2::row_vector(vec![1.0, 2.0]);
        let report = grad_check(
            |g, v| {
                let sq = g.matmul_t(v[0], v[0])?;
                Ok(g.sum_all(sq))
            },
            &[w],
            1e-4,
            1e-7,
        )
        .unwrap();
        assert_eq!(report.analytic[0].data(), &[2.0, 4.0]);
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn unused_param_is_exactly_zero_both_ways() {
        let used = Tensor2::row_vector(vec![0.3, -0.7]);
        let unused = Tensor2::row_vector(vec![5.0, 6.0, 7.0]);
        let report = grad_check(
            |g, v| {
                let s = g.sigmoid(v[0]);
                Ok(g.sum_all(s))
            },
            &[used, unused],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.analytic[1].data().iter().all(|&x| x == 0.0));
        assert!(report.numeric[1].data().iter().all(|&x| x == 0.0));
        assert!(report.passed);
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        let r = grad_check(|g, v| Ok(g.sum_all(v[0])), &[Tensor2::scalar(1.0)], 0.1, 1e-4);
        assert!(r.is_err());
    }
}
