//! Reparameterized sampling `Ŷ = sigmoid(μ + ε·σ)`, `σ = sqrt(var)`.

use super::DistributionPrediction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{sigmoid, Scalar};

/// Added under the square root wherever `σ` is derived from `var` for a
/// weight or a derivative, so `d σ / d var` stays finite at zero variance.
pub const SIGMA_EPS: f64 = 1e-12;

/// `σ = sqrt(var + SIGMA_EPS)`.
pub fn std_from_var<S: Scalar>(var: &Grid<S>) -> Grid<S> {
    var.map(|&v| (v + S::of(SIGMA_EPS)).sqrt())
}

fn check<S: Scalar>(pred: &DistributionPrediction<S>, epsilon: Option<&Grid<S>>) -> Result<()> {
    pred.mu.check_dims(&pred.var, "mean vs variance")?;
    if let Some(e) = epsilon {
        pred.mu.check_dims(e, "epsilon")?;
    }
    if pred.var.as_slice().iter().any(|&v| !(v >= S::zero())) {
        return Err(Error::invalid("negative or NaN variance"));
    }
    Ok(())
}

/// Pre-sigmoid sample `μ + ε·sqrt(var)`; `None` means `ε = 0`.
pub fn pre_sigmoid_sample<S: Scalar>(pred: &DistributionPrediction<S>, epsilon: Option<&Grid<S>>) -> Result<Grid<S>> {
    check(pred, epsilon)?;
    Ok(match epsilon {
        None => pred.mu.clone(),
        Some(eps) => {
            let data = pred
                .mu
                .as_slice()
                .iter()
                .zip(pred.var.as_slice())
                .zip(eps.as_slice())
                .map(|((&m, &v), &e)| m + e * v.sqrt())
                .collect();
            Grid::from_vec(pred.mu.height(), pred.mu.width(), data)?
        }
    })
}

pub fn sample_prediction<S: Scalar>(pred: &DistributionPrediction<S>, epsilon: Option<&Grid<S>>) -> Result<Grid<S>> {
    Ok(pre_sigmoid_sample(pred, epsilon)?.map(|&z| sigmoid(z)))
}

/// Chain `d L / d Ŷ` back to `(d L / d μ, d L / d var)` given the sample `y_hat`.
pub fn sample_backward<S: Scalar>(
    pred: &DistributionPrediction<S>,
    epsilon: Option<&Grid<S>>,
    y_hat: &Grid<S>,
    d_y: &Grid<S>,
) -> (Grid<S>, Grid<S>) {
    let (h, w) = pred.dims();
    let mut d_mu = Vec::with_capacity(h * w);
    let mut d_var = Vec::with_capacity(h * w);
    for j in 0..h * w {
        let y = y_hat.as_slice()[j];
        let g = d_y.as_slice()[j] * y * (S::one() - y);
        d_mu.push(g);
        let e = epsilon.map_or(S::zero(), |e| e.as_slice()[j]);
        let sigma = (pred.var.as_slice()[j] + S::of(SIGMA_EPS)).sqrt();
        d_var.push(g * e / (S::of(2.0) * sigma));
    }
    (
        Grid::from_vec(h, w, d_mu).expect("dims"),
        Grid::from_vec(h, w, d_var).expect("dims"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(mu: f64, var: f64) -> DistributionPrediction<f64> {
        DistributionPrediction::new(Grid::filled(1, 1, mu), Grid::filled(1, 1, var)).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let p = pred(0.0, 1.0);
        let eps = Grid::filled(1, 1, 1.0);
        let y = sample_prediction(&p, Some(&eps)).unwrap().at(0, 0);
        assert!((y - 0.731_058_578_630_004_9).abs() < 1e-15);

        let p = pred(0.7, 2.0);
        assert_eq!(sample_prediction(&p, None).unwrap().at(0, 0), sigmoid(0.7));

        let p = pred(-0.4, 0.0);
        let a = sample_prediction(&p, Some(&Grid::filled(1, 1, 3.0))).unwrap();
        let b = sample_prediction(&p, Some(&Grid::filled(1, 1, -7.0))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_negative_variance_and_bad_shapes() {
        let p = DistributionPrediction {
            mu: Grid::filled(1, 2, 0.0),
            var: Grid::from_vec(1, 2, vec![0.1, -0.1]).unwrap(),
        };
        assert!(sample_prediction(&p, None).is_err());
        let p = pred(0.0, 1.0);
        assert!(sample_prediction(&p, Some(&Grid::filled(2, 1, 0.0))).is_err());
    }
}
