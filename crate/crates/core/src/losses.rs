//! Training objectives: class-balanced variance regression, class-balanced
//! BCE, the progressively uncertainty-weighted BCE and the alternative
//! weightings used for ablations.
//!
//! All losses are sums over pixels. Each function returns its value together
//! with the exact partial derivatives w.r.t. its differentiable inputs; which
//! of those partials training actually propagates is decided by
//! [`WeightingMode::propagates_sigma_grad`].

use serde::{Deserialize, Serialize};

use crate::annotations::WeightMap;
use crate::error::{Error, Result};
use crate::grid::{BinaryMap, Grid};
use crate::scalar::Scalar;

pub const DEFAULT_EPS_CLAMP: f64 = 1e-6;

/// How the per-pixel BCE is weighted by uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// `exp(β_t σ̂_j)` with `β_t = t / T`.
    Progressive,
    /// `exp(-σ̂_j) · bce_j + 2 σ̂_j`.
    Kendall,
    /// `exp(σ̂_j)`.
    FixedExp,
    /// `exp(β_t σ_j)` with `σ` from the annotators' label variance.
    GtVariance,
    /// Unweighted balanced BCE.
    None,
}

impl WeightingMode {
    /// Whether training back-propagates through the uncertainty weight.
    /// Only the Kendall form needs it: its penalty term is meaningless
    /// otherwise. Everywhere else the weight is a per-step constant.
    pub fn propagates_sigma_grad(self) -> bool {
        matches!(self, WeightingMode::Kendall)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::Progressive => "progressive",
            WeightingMode::Kendall => "kendall",
            WeightingMode::FixedExp => "fixed_exp",
            WeightingMode::GtVariance => "gt_variance",
            WeightingMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Total epochs `T`.
    pub total_epochs: usize,
    pub weighting_mode: WeightingMode,
    #[serde(default = "default_eps")]
    pub eps_clamp: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS_CLAMP
}

impl LossConfig {
    pub fn new(total_epochs: usize, weighting_mode: WeightingMode) -> Self {
        Self {
            total_epochs,
            weighting_mode,
            eps_clamp: DEFAULT_EPS_CLAMP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::invalid("total_epochs must be >= 1"));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp <= 1e-3) {
            return Err(Error::invalid(format!("eps_clamp {} outside (0, 1e-3]", self.eps_clamp)));
        }
        Ok(())
    }

    /// `β_t = t / T`.
    pub fn beta(&self, epoch: usize) -> Result<f64> {
        self.validate()?;
        if epoch > self.total_epochs {
            return Err(Error::invalid(format!(
                "epoch {epoch} exceeds total epochs {}",
                self.total_epochs
            )));
        }
        Ok(epoch as f64 / self.total_epochs as f64)
    }
}

/// Scalar loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_bvar: f64,
    /// Balanced BCE with unit weights.
    pub l_edge: f64,
    /// The weighted edge term actually optimized under the active mode
    /// (equal to `l_edge` for [`WeightingMode::None`]).
    pub l_uedge: f64,
    pub total: f64,
    pub beta_t: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.l_bvar, self.l_edge, self.l_uedge, self.total, self.beta_t]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let sum = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        LossReport {
            l_bvar: sum(|r| r.l_bvar),
            l_edge: sum(|r| r.l_edge),
            l_uedge: sum(|r| r.l_uedge),
            total: sum(|r| r.total),
            beta_t: sum(|r| r.beta_t),
        }
    }
}

/// An edge loss and its partials w.r.t. the prediction and `σ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLoss<S> {
    pub value: S,
    pub d_pred: Grid<S>,
    pub d_sigma: Grid<S>,
}

/// The variance loss and its partial w.r.t. the predicted variance.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceLoss<S> {
    pub value: S,
    pub d_var: Grid<S>,
}

/// `L_bvar = Σ M_j (σ̂²_j - σ²_j)²`.
pub fn balanced_mse_variance<S: Scalar>(var_pred: &Grid<S>, var_target: &Grid<S>, weights: &WeightMap<S>) -> Result<VarianceLoss<S>> {
    var_pred.check_dims(var_target, "variance prediction vs target")?;
    var_pred.check_dims(&weights.weights, "variance prediction vs weights")?;
    if var_pred.as_slice().iter().any(|&v| v < S::zero()) {
        return Err(Error::invalid("predicted variance must be non-negative"));
    }
    let mut value = S::zero();
    let mut d = Vec::with_capacity(var_pred.len());
    for ((&p, &t), &m) in var_pred
        .as_slice()
        .iter()
        .zip(var_target.as_slice())
        .zip(weights.weights.as_slice())
    {
        let e = p - t;
        value += m * e * e;
        d.push(S::of(2.0) * m * e);
    }
    Ok(VarianceLoss {
        value,
        d_var: Grid::from_vec(var_pred.height(), var_pred.width(), d)?,
    })
}

/// Per-pixel BCE with the prediction clamped to `[eps, 1 - eps]`, and its
/// derivative (zero where the clamp is active).
#[inline]
fn bce_term<S: Scalar>(p: S, y: u8, eps: S) -> (S, S) {
    let one = S::one();
    let c = p.max(eps).min(one - eps);
    let active = p > eps && p < one - eps;
    if y != 0 {
        (-c.ln(), if active { -one / c } else { S::zero() })
    } else {
        (-(one - c).ln(), if active { one / (one - c) } else { S::zero() })
    }
}

fn check_edge_inputs<S: Scalar>(pred: &Grid<S>, label: &BinaryMap, weights: &WeightMap<S>) -> Result<()> {
    pred.check_dims(label, "prediction vs label")?;
    pred.check_dims(&weights.weights, "prediction vs weights")?;
    if !label.is_binary() {
        return Err(Error::invalid("label is not binary"));
    }
    Ok(())
}

/// Σ_j f(j) · M_j · bce_j + g(j), with the weight `f` and additive
/// penalty `g` given per pixel along with their σ̂-derivatives.
fn weighted_bce<S: Scalar>(
    pred: &Grid<S>,
    label: &BinaryMap,
    weights: &WeightMap<S>,
    eps: f64,
    mut weight: impl FnMut(usize) -> (S, S),
    mut penalty: impl FnMut(usize) -> (S, S),
) -> Result<EdgeLoss<S>> {
    check_edge_inputs(pred, label, weights)?;
    let eps = S::of(eps);
    let n = pred.len();
    let mut value = S::zero();
    let mut d_pred = Vec::with_capacity(n);
    let mut d_sigma = Vec::with_capacity(n);
    for j in 0..n {
        let m = weights.weights.as_slice()[j];
        let (b, db) = bce_term(pred.as_slice()[j], label.as_slice()[j], eps);
        let (f, df) = weight(j);
        let (g, dg) = penalty(j);
        value += f * m * b + g;
        d_pred.push(f * m * db);
        d_sigma.push(df * m * b + dg);
    }
    let (h, w) = pred.dims();
    Ok(EdgeLoss {
        value,
        d_pred: Grid::from_vec(h, w, d_pred)?,
        d_sigma: Grid::from_vec(h, w, d_sigma)?,
    })
}

fn no_penalty<S: Scalar>(_: usize) -> (S, S) {
    (S::zero(), S::zero())
}

fn check_sigma<S: Scalar>(pred: &Grid<S>, sigma: &Grid<S>) -> Result<()> {
    pred.check_dims(sigma, "prediction vs sigma")?;
    if sigma.as_slice().iter().any(|&s| !(s >= S::zero())) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    Ok(())
}

/// `L_edge = -Σ M_j [Y_j log Ŷ_j + (1 - Y_j) log(1 - Ŷ_j)]`.
pub fn balanced_bce<S: Scalar>(pred: &Grid<S>, label: &BinaryMap, weights: &WeightMap<S>, eps_clamp: f64) -> Result<EdgeLoss<S>> {
    weighted_bce(pred, label, weights, eps_clamp, |_| (S::one(), S::zero()), no_penalty)
}

/// `L_uedge = Σ exp(β_t σ̂_j) · M_j · bce_j`, `β_t = t / T`.
pub fn uncertainty_weighted_edge_loss<S: Scalar>(
    pred: &Grid<S>,
    label: &BinaryMap,
    weights: &WeightMap<S>,
    sigma_hat: &Grid<S>,
    epoch: usize,
    config: &LossConfig,
) -> Result<EdgeLoss<S>> {
    let beta = S::of(config.beta(epoch)?);
    check_sigma(pred, sigma_hat)?;
    let s = sigma_hat.as_slice();
    weighted_bce(
        pred,
        label,
        weights,
        config.eps_clamp,
        |j| {
            let f = (beta * s[j]).exp();
            (f, beta * f)
        },
        no_penalty,
    )
}

/// The alternative weightings: `kendall`, `fixed_exp` and `gt_variance`
/// (which uses `sigma_gt`, the annotators' standard deviation).
#[allow(clippy::too_many_arguments)]
pub fn ablation_weighting<S: Scalar>(
    pred: &Grid<S>,
    label: &BinaryMap,
    weights: &WeightMap<S>,
    sigma_hat: &Grid<S>,
    sigma_gt: &Grid<S>,
    epoch: usize,
    mode: WeightingMode,
    config: &LossConfig,
) -> Result<EdgeLoss<S>> {
    check_sigma(pred, sigma_hat)?;
    let s = sigma_hat.as_slice();
    let eps = config.eps_clamp;
    match mode {
        WeightingMode::Kendall => weighted_bce(
            pred,
            label,
            weights,
            eps,
            |j| {
                let f = (-s[j]).exp();
                (f, -f)
            },
            |j| (S::of(2.0) * s[j], S::of(2.0)),
        ),
        WeightingMode::FixedExp => weighted_bce(
            pred,
            label,
            weights,
            eps,
            |j| {
                let f = s[j].exp();
                (f, f)
            },
            no_penalty,
        ),
        WeightingMode::GtVariance => {
            check_sigma(pred, sigma_gt)?;
            let beta = S::of(config.beta(epoch)?);
            let g = sigma_gt.as_slice();
            weighted_bce(pred, label, weights, eps, |j| ((beta * g[j]).exp(), S::zero()), no_penalty)
        }
        other => Err(Error::invalid(format!(
            "{} is not an ablation weighting (expected kendall, fixed_exp or gt_variance)",
            other.as_str()
        ))),
    }
}

/// Everything the total loss needs for one image.
pub struct LossInputs<'a, S> {
    /// Sampled prediction `Ŷ`.
    pub pred: &'a Grid<S>,
    pub label: &'a BinaryMap,
    pub weights: &'a WeightMap<S>,
    pub var_pred: &'a Grid<S>,
    pub var_target: &'a Grid<S>,
    /// `σ̂ = sqrt(σ̂² + ε)`.
    pub sigma_hat: &'a Grid<S>,
    /// Annotators' standard deviation, needed by `gt_variance` only.
    pub sigma_gt: Option<&'a Grid<S>>,
}

/// Gradients of the total loss w.r.t. `Ŷ`, `σ̂²` (direct, from `L_bvar`) and `σ̂`.
#[derive(Debug, Clone)]
pub struct TotalGrad<S> {
    pub d_pred: Grid<S>,
    pub d_var: Grid<S>,
    pub d_sigma: Grid<S>,
}

/// `L = L_uedge + L_bvar` (progressive); other modes swap the edge term.
pub fn total_loss<S: Scalar>(inputs: &LossInputs<'_, S>, epoch: usize, config: &LossConfig) -> Result<(LossReport, TotalGrad<S>)> {
    let beta_t = config.beta(epoch)?;
    let bvar = balanced_mse_variance(inputs.var_pred, inputs.var_target, inputs.weights)?;
    let edge = balanced_bce(inputs.pred, inputs.label, inputs.weights, config.eps_clamp)?;
    let weighted = match config.weighting_mode {
        WeightingMode::Progressive => {
            uncertainty_weighted_edge_loss(inputs.pred, inputs.label, inputs.weights, inputs.sigma_hat, epoch, config)?
        }
        WeightingMode::None => edge.clone(),
        mode => {
            let zeros;
            let sigma_gt = match inputs.sigma_gt {
                Some(s) => s,
                None if mode == WeightingMode::GtVariance => {
                    return Err(Error::invalid("gt_variance weighting needs the label standard deviation"))
                }
                None => {
                    zeros = inputs.sigma_hat.map(|_| S::zero());
                    &zeros
                }
            };
            ablation_weighting(inputs.pred, inputs.label, inputs.weights, inputs.sigma_hat, sigma_gt, epoch, mode, config)?
        }
    };
    let report = LossReport {
        l_bvar: bvar.value.as_f64(),
        l_edge: edge.value.as_f64(),
        l_uedge: weighted.value.as_f64(),
        total: weighted.value.as_f64() + bvar.value.as_f64(),
        beta_t,
    };
    Ok((
        report,
        TotalGrad {
            d_pred: weighted.d_pred,
            d_var: bvar.d_var,
            d_sigma: weighted.d_sigma,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::weight_map;

    fn wm(label: &BinaryMap) -> WeightMap<f64> {
        weight_map(label).unwrap()
    }

    #[test]
    fn variance_loss_examples() {
        let target = Grid::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let pred = Grid::from_vec(1, 2, vec![0.2, 0.0]).unwrap();
        let label = Grid::from_vec(1, 2, vec![1u8, 0]).unwrap();
        let w = wm(&label);
        assert_eq!(w.weights.as_slice(), &[0.5, 0.5]);
        let l = balanced_mse_variance(&pred, &target, &w).unwrap();
        // 0.5 * 0.2^2 + 0.5 * 0
        assert!((l.value - 0.02).abs() < 1e-15);
        assert_eq!(balanced_mse_variance(&pred, &pred, &w).unwrap().value, 0.0);
        let doubled = balanced_mse_variance(&pred, &target, &w.scaled(2.0)).unwrap();
        assert!((doubled.value - 2.0 * l.value).abs() < 1e-15);
        assert!(balanced_mse_variance(&pred, &Grid::filled(2, 1, 0.0), &w).is_err());
    }

    #[test]
    fn bce_examples() {
        let label = Grid::from_vec(2, 2, vec![1u8, 0, 1, 0]).unwrap();
        let w = wm(&label);
        let half = Grid::filled(2, 2, 0.5);
        let l = balanced_bce(&half, &label, &w, DEFAULT_EPS_CLAMP).unwrap();
        assert!((l.value - 4.0 * 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((l.value - 1.3863).abs() < 1e-4);

        let perfect = label.map(|&y| y as f64);
        let l = balanced_bce(&perfect, &label, &w, DEFAULT_EPS_CLAMP).unwrap();
        let expect = 4.0 * 0.5 * (1.0 / (1.0 - DEFAULT_EPS_CLAMP)).ln();
        assert!((l.value - expect).abs() < 1e-12);
        assert!(l.value < 1e-5);

        let degenerate = Grid::filled(2, 2, 0u8);
        let l = balanced_bce(&half, &degenerate, &wm(&degenerate), DEFAULT_EPS_CLAMP).unwrap();
        assert_eq!(l.value, 0.0);

        let not_binary = Grid::filled(2, 2, 3u8);
        assert!(balanced_bce(&half, &not_binary, &w, DEFAULT_EPS_CLAMP).is_err());
    }

    #[test]
    fn progressive_weight_examples() {
        let cfg = LossConfig::new(10, WeightingMode::Progressive);
        let label = Grid::from_vec(1, 3, vec![1u8, 0, 0]).unwrap();
        let w = wm(&label);
        let pred = Grid::from_vec(1, 3, vec![0.3, 0.6, 0.1]).unwrap();
        let sigma = Grid::from_vec(1, 3, vec![0.4, 1.0, 2.0]).unwrap();
        let base = balanced_bce(&pred, &label, &w, cfg.eps_clamp).unwrap().value;
        let at0 = uncertainty_weighted_edge_loss(&pred, &label, &w, &sigma, 0, &cfg).unwrap();
        assert_eq!(at0.value, base);
        let zero_sigma = Grid::filled(1, 3, 0.0);
        for t in 0..=10 {
            let l = uncertainty_weighted_edge_loss(&pred, &label, &w, &zero_sigma, t, &cfg).unwrap();
            assert_eq!(l.value, base);
        }
        assert!(uncertainty_weighted_edge_loss(&pred, &label, &w, &sigma, 11, &cfg).is_err());

        // one pixel at t = T with σ̂ = 1: e × its balanced BCE term
        let one_label = Grid::from_vec(1, 2, vec![1u8, 0]).unwrap();
        let one_w = wm(&one_label);
        let p = Grid::from_vec(1, 2, vec![0.3, 0.2]).unwrap();
        let s = Grid::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let l = uncertainty_weighted_edge_loss(&p, &one_label, &one_w, &s, 10, &cfg).unwrap();
        let term0 = 0.5 * -(0.3f64.ln());
        let term1 = 0.5 * -(0.8f64.ln());
        assert!((l.value - (std::f64::consts::E * term0 + term1)).abs() < 1e-12);
    }

    #[test]
    fn ablation_examples() {
        let cfg = LossConfig::new(5, WeightingMode::Kendall);
        let label = Grid::from_vec(1, 4, vec![1u8, 0, 0, 0]).unwrap();
        let w = wm(&label);
        let pred = Grid::from_vec(1, 4, vec![0.7, 0.2, 0.4, 0.05]).unwrap();
        let zero = Grid::filled(1, 4, 0.0);
        let gt = Grid::from_vec(1, 4, vec![0.5, 0.4, 0.0, 0.3]).unwrap();
        let base = balanced_bce(&pred, &label, &w, cfg.eps_clamp).unwrap().value;
        for mode in [WeightingMode::Kendall, WeightingMode::FixedExp] {
            let l = ablation_weighting(&pred, &label, &w, &zero, &gt, 3, mode, &cfg).unwrap();
            assert_eq!(l.value, base);
        }
        let l = ablation_weighting(&pred, &label, &w, &zero, &gt, 0, WeightingMode::GtVariance, &cfg).unwrap();
        assert_eq!(l.value, base);
        for mode in [WeightingMode::Progressive, WeightingMode::None] {
            assert!(ablation_weighting(&pred, &label, &w, &zero, &gt, 0, mode, &cfg).is_err());
        }
    }

    #[test]
    fn total_loss_modes() {
        let label = Grid::from_vec(1, 4, vec![1u8, 0, 1, 0]).unwrap();
        let w = wm(&label);
        let pred = Grid::from_vec(1, 4, vec![0.6, 0.3, 0.2, 0.1]).unwrap();
        let var_pred = Grid::from_vec(1, 4, vec![0.1, 0.0, 0.2, 0.05]).unwrap();
        let var_target = Grid::from_vec(1, 4, vec![0.25, 0.0, 0.1875, 0.0]).unwrap();
        let sigma = crate::model::std_from_var(&var_pred);
        let inputs = LossInputs {
            pred: &pred,
            label: &label,
            weights: &w,
            var_pred: &var_pred,
            var_target: &var_target,
            sigma_hat: &sigma,
            sigma_gt: None,
        };
        let prog = LossConfig::new(4, WeightingMode::Progressive);
        let (r, _) = total_loss(&inputs, 2, &prog).unwrap();
        assert_eq!(r.total, r.l_uedge + r.l_bvar);
        assert_eq!(r.beta_t, 0.5);
        assert!(r.l_uedge > r.l_edge);

        let none = LossConfig::new(4, WeightingMode::None);
        let (r, _) = total_loss(&inputs, 2, &none).unwrap();
        assert_eq!(r.total, r.l_edge + r.l_bvar);

        let (a, ga) = total_loss(&inputs, 0, &prog).unwrap();
        let (b, gb) = total_loss(&inputs, 0, &none).unwrap();
        assert_eq!(a.total, b.total);
        assert_eq!(ga.d_pred, gb.d_pred);

        let gtv = LossConfig::new(4, WeightingMode::GtVariance);
        assert!(total_loss(&inputs, 1, &gtv).is_err());

        // additivity with zero components
        let perfect_var = LossInputs {
            var_pred: &var_target,
            ..inputs
        };
        let (r, _) = total_loss(&perfect_var, 1, &prog).unwrap();
        assert_eq!(r.l_bvar, 0.0);
        assert_eq!(r.total, r.l_uedge);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(0, WeightingMode::None).validate().is_err());
        let mut c = LossConfig::new(3, WeightingMode::None);
        c.eps_clamp = 1e-2;
        assert!(c.validate().is_err());
        c.eps_clamp = 1e-6;
        assert_eq!(c.beta(3).unwrap(), 1.0);
    }

    struct Case {
        pred: Grid<f64>,
        label: BinaryMap,
        var: Grid<f64>,
        target: Grid<f64>,
        sigma: Grid<f64>,
        gt: Grid<f64>,
    }

    fn case() -> Case {
        Case {
            pred: Grid::from_vec(2, 3, vec![0.7, 0.2, 0.45, 0.05, 0.9, 0.33]).unwrap(),
            label: Grid::from_vec(2, 3, vec![1, 0, 1, 0, 0, 0]).unwrap(),
            var: Grid::from_vec(2, 3, vec![0.1, 0.02, 0.2, 0.05, 0.0, 0.12]).unwrap(),
            target: Grid::from_vec(2, 3, vec![0.25, 0.0, 0.1875, 0.0, 0.09, 0.0]).unwrap(),
            sigma: Grid::from_vec(2, 3, vec![0.3, 0.1, 0.45, 0.2, 0.05, 0.35]).unwrap(),
            gt: Grid::from_vec(2, 3, vec![0.5, 0.0, 0.43, 0.0, 0.3, 0.0]).unwrap(),
        }
    }

    fn fd<F: Fn(&Grid<f64>) -> f64>(x: &Grid<f64>, f: F) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.clone();
                let mut b = x.clone();
                a.as_mut_slice()[i] += h;
                b.as_mut_slice()[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn close(analytic: &Grid<f64>, numeric: &[f64]) {
        for (a, n) in analytic.as_slice().iter().zip(numeric) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn variance_gradient_matches_finite_differences() {
        let c = case();
        let w = wm(&c.label);
        // keep perturbations non-negative
        let shifted = c.var.map(|v| v + 0.01);
        let g = balanced_mse_variance(&shifted, &c.target, &w).unwrap().d_var;
        close(&g, &fd(&shifted, |v| balanced_mse_variance(v, &c.target, &w).unwrap().value));
    }

    #[test]
    fn edge_gradients_match_finite_differences() {
        let c = case();
        let w = wm(&c.label);
        let cfg = LossConfig::new(6, WeightingMode::Progressive);
        let eps = cfg.eps_clamp;

        let g = balanced_bce(&c.pred, &c.label, &w, eps).unwrap();
        close(&g.d_pred, &fd(&c.pred, |p| balanced_bce(p, &c.label, &w, eps).unwrap().value));
        assert!(g.d_sigma.as_slice().iter().all(|&d| d == 0.0));

        let g = uncertainty_weighted_edge_loss(&c.pred, &c.label, &w, &c.sigma, 4, &cfg).unwrap();
        close(&g.d_pred, &fd(&c.pred, |p| {
            uncertainty_weighted_edge_loss(p, &c.label, &w, &c.sigma, 4, &cfg).unwrap().value
        }));
        close(&g.d_sigma, &fd(&c.sigma, |s| {
            uncertainty_weighted_edge_loss(&c.pred, &c.label, &w, s, 4, &cfg).unwrap().value
        }));

        for mode in [WeightingMode::Kendall, WeightingMode::FixedExp, WeightingMode::GtVariance] {
            let f = |p: &Grid<f64>, s: &Grid<f64>| {
                ablation_weighting(p, &c.label, &w, s, &c.gt, 3, mode, &cfg).unwrap()
            };
            let g = f(&c.pred, &c.sigma);
            close(&g.d_pred, &fd(&c.pred, |p| f(p, &c.sigma).value));
            close(&g.d_sigma, &fd(&c.sigma, |s| f(&c.pred, s).value));
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let c = case();
        let w = wm(&c.label);
        let var = c.var.map(|v| v + 0.01);
        for mode in [
            WeightingMode::Progressive,
            WeightingMode::Kendall,
            WeightingMode::FixedExp,
            WeightingMode::GtVariance,
            WeightingMode::None,
        ] {
            let cfg = LossConfig::new(5, mode);
            let eval = |p: &Grid<f64>, v: &Grid<f64>, s: &Grid<f64>| {
                let inputs = LossInputs {
                    pred: p,
                    label: &c.label,
                    weights: &w,
                    var_pred: v,
                    var_target: &c.target,
                    sigma_hat: s,
                    sigma_gt: Some(&c.gt),
                };
                total_loss(&inputs, 2, &cfg).unwrap()
            };
            let (_, g) = eval(&c.pred, &var, &c.sigma);
            close(&g.d_pred, &fd(&c.pred, |p| eval(p, &var, &c.sigma).0.total));
            close(&g.d_var, &fd(&var, |v| eval(&c.pred, v, &c.sigma).0.total));
            close(&g.d_sigma, &fd(&c.sigma, |s| eval(&c.pred, &var, s).0.total));
        }
    }

    #[test]
    fn clamped_predictions_stay_finite() {
        let label = Grid::from_vec(1, 2, vec![1u8, 0]).unwrap();
        let w = wm(&label);
        let wrong = Grid::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let l = balanced_bce(&wrong, &label, &w, DEFAULT_EPS_CLAMP).unwrap();
        assert!((l.value - -(DEFAULT_EPS_CLAMP.ln())).abs() < 1e-9);
        assert!(l.d_pred.as_slice().iter().all(|&d| d == 0.0));
    }

    proptest::proptest! {
        #[test]
        fn losses_are_non_negative_and_monotone_in_beta(
            bits in proptest::collection::vec(0u8..2, 9),
            preds in proptest::collection::vec(0.0f64..=1.0, 9),
            sig in proptest::collection::vec(0.0f64..3.0, 9),
            vars in proptest::collection::vec(0.0f64..0.25, 9),
            targets in proptest::collection::vec(0.0f64..0.25, 9),
            t in 0usize..8,
        ) {
            let label = Grid::from_vec(3, 3, bits).unwrap();
            let w = wm(&label);
            let pred = Grid::from_vec(3, 3, preds).unwrap();
            let sigma = Grid::from_vec(3, 3, sig).unwrap();
            let var = Grid::from_vec(3, 3, vars).unwrap();
            let target = Grid::from_vec(3, 3, targets).unwrap();
            let cfg = LossConfig::new(8, WeightingMode::Progressive);
            let bce = balanced_bce(&pred, &label, &w, cfg.eps_clamp).unwrap().value;
            proptest::prop_assert!(bce >= 0.0);
            proptest::prop_assert!(balanced_mse_variance(&var, &target, &w).unwrap().value >= 0.0);
            let a = uncertainty_weighted_edge_loss(&pred, &label, &w, &sigma, t, &cfg).unwrap().value;
            let b = uncertainty_weighted_edge_loss(&pred, &label, &w, &sigma, t + 1, &cfg).unwrap().value;
            proptest::prop_assert!(a >= bce - 1e-12);
            proptest::prop_assert!(b >= a - 1e-12);
        }
    }
}
