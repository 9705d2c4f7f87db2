//! Gaussian linear mixed-effect model with participant-grouped random
//! effects, fitted by (restricted) maximum likelihood.
//!
//! The variance parameters are profiled: given the random-effect variance
//! ratios, the fixed effects and the residual variance have closed GLS
//! forms, and a quasi-Newton loop maximizes the profiled log-likelihood
//! over the log-ratios. Features are z-scored internally for conditioning
//! and the coefficients mapped back to the original scale.

use std::collections::BTreeMap;

use super::linalg::{Cholesky, SymMat};
use super::{PerceptionScores, ResponseVector};
use crate::cyclostationary::FeatureVector;
use crate::error::{Error, Result};

pub const N_FIXED: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomSpec {
    /// One random intercept per participant (default).
    Intercept,
    /// Random intercept plus independent random slopes on the 8 features.
    InterceptPlusSlopes,
}

impl RandomSpec {
    fn n_terms(&self) -> usize {
        match self {
            RandomSpec::Intercept => 1,
            RandomSpec::InterceptPlusSlopes => N_FIXED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitCriterion {
    Ml,
    Reml,
}

#[derive(Debug, Clone)]
pub struct LmmFit {
    /// beta[0] is the intercept, beta[1..=8] the feature coefficients, on
    /// the original feature scale.
    pub beta: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Two-sided Wald p-values.
    pub p_values: Vec<f64>,
    /// One variance per random term, on the original covariate scale.
    pub random_effect_variances: Vec<f64>,
    pub residual_variance: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Outer-loop objective trace (non-decreasing).
    pub ll_trace: Vec<f64>,
}

fn response_value(scores: &PerceptionScores, response: ResponseVector) -> f64 {
    match response {
        ResponseVector::Negative => scores.negative,
        ResponseVector::Positive => scores.positive,
        ResponseVector::Attentive => scores.attentive,
        ResponseVector::Relaxed => scores.relaxed,
        ResponseVector::General => scores.general as f64,
    }
}

struct Standardization {
    means: [f64; 8],
    sds: [f64; 8],
}

struct Design {
    /// Standardized design matrix, n x 9 row-major, column 0 all ones.
    x: Vec<f64>,
    y: Vec<f64>,
    /// Observation index ranges per group, in participant order.
    groups: Vec<Vec<usize>>,
    std: Standardization,
}

fn build_design(
    rows: &[(PerceptionScores, FeatureVector, String)],
    response: ResponseVector,
) -> Result<Design> {
    let n = rows.len();
    let mut by_participant: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, _, pid)) in rows.iter().enumerate() {
        by_participant.entry(pid.as_str()).or_default().push(i);
    }
    if by_participant.len() < 2 {
        return Err(Error::Config(
            "mixed model needs at least 2 participants".into(),
        ));
    }
    for (pid, obs) in &by_participant {
        if obs.len() < 2 {
            return Err(Error::Config(format!(
                "participant '{pid}' has {} observation(s), need at least 2",
                obs.len()
            )));
        }
    }
    let features: Vec<[f64; 8]> = rows.iter().map(|(_, f, _)| f.as_array()).collect();
    let mut means = [0.0f64; 8];
    let mut sds = [0.0f64; 8];
    for j in 0..8 {
        let mean = features.iter().map(|f| f[j]).sum::<f64>() / n as f64;
        let var = features
            .iter()
            .map(|f| (f[j] - mean) * (f[j] - mean))
            .sum::<f64>()
            / n as f64;
        means[j] = mean;
        sds[j] = var.sqrt();
        if sds[j] == 0.0 {
            return Err(Error::SingularDesign(vec![format!("phi{}", j + 1)]));
        }
    }
    let mut x = vec![0.0; n * N_FIXED];
    for (i, f) in features.iter().enumerate() {
        x[i * N_FIXED] = 1.0;
        for j in 0..8 {
            x[i * N_FIXED + 1 + j] = (f[j] - means[j]) / sds[j];
        }
    }
    check_collinearity(&x, n)?;
    let y: Vec<f64> = rows
        .iter()
        .map(|(s, _, _)| response_value(s, response))
        .collect();
    Ok(Design {
        x,
        y,
        groups: by_participant.into_values().collect(),
        std: Standardization { means, sds },
    })
}

/// Modified Gram-Schmidt rank check; dependent columns are reported by
/// feature name.
fn check_collinearity(x: &[f64], n: usize) -> Result<()> {
    let p = N_FIXED;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..p {
        let mut col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
        let orig_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for b in &basis {
            let dot: f64 = col.iter().zip(b).map(|(a, c)| a * c).sum();
            for (v, c) in col.iter_mut().zip(b) {
                *v -= dot * c;
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * orig_norm.max(1.0) {
            dependent.push(if j == 0 {
                "intercept".to_string()
            } else {
                format!("phi{j}")
            });
        } else {
            basis.push(col.iter().map(|v| v / norm).collect());
        }
    }
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::SingularDesign(dependent))
    }
}

/// Per-evaluation products of the profiled likelihood.
struct ProfileEval {
    ll: f64,
    beta_std: Vec<f64>,
    sigma2: f64,
    a_inv: SymMat,
    _log_det_v: f64,
}

/// Random-effect design row for observation i (points into the std design).
fn z_row<'a>(design: &'a Design, spec: RandomSpec, i: usize) -> &'a [f64] {
    match spec {
        RandomSpec::Intercept => &design.x[i * N_FIXED..i * N_FIXED + 1],
        RandomSpec::InterceptPlusSlopes => &design.x[i * N_FIXED..(i + 1) * N_FIXED],
    }
}

fn profile_likelihood(
    design: &Design,
    spec: RandomSpec,
    criterion: FitCriterion,
    theta: &[f64],
) -> Result<ProfileEval> {
    let n = design.y.len();
    let p = N_FIXED;
    let gamma: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    let mut a = SymMat::zeros(p);
    let mut b = vec![0.0; p];
    let mut yy = 0.0;
    let mut log_det_v = 0.0;
    for group in &design.groups {
        let m = group.len();
        // V_g = I + Z Γ Zᵀ
        let mut v = SymMat::zeros(m);
        for (r, &ir) in group.iter().enumerate() {
            let zr = z_row(design, spec, ir);
            for (c, &ic) in group.iter().enumerate().skip(r) {
                let zc = z_row(design, spec, ic);
                let mut acc = if r == c { 1.0 } else { 0.0 };
                for (k, g) in gamma.iter().enumerate() {
                    acc += g * zr[k] * zc[k];
                }
                *v.at_mut(r, c) = acc;
                *v.at_mut(c, r) = acc;
            }
        }
        let chol = Cholesky::decompose(&v)?;
        log_det_v += chol.log_det();
        // V⁻¹ X_g and V⁻¹ y_g column by column
        let yg: Vec<f64> = group.iter().map(|&i| design.y[i]).collect();
        let viy = chol.solve_vec(&yg);
        let mut vix = vec![vec![0.0; m]; p];
        for (j, vix_col) in vix.iter_mut().enumerate() {
            let col: Vec<f64> = group.iter().map(|&i| design.x[i * p + j]).collect();
            *vix_col = chol.solve_vec(&col);
        }
        for j in 0..p {
            let xj: Vec<f64> = group.iter().map(|&i| design.x[i * p + j]).collect();
            for k in j..p {
                let dot: f64 = xj.iter().zip(&vix[k]).map(|(a, c)| a * c).sum();
                *a.at_mut(j, k) += dot;
                if k != j {
                    *a.at_mut(k, j) += dot;
                }
            }
            b[j] += xj.iter().zip(&viy).map(|(a, c)| a * c).sum::<f64>();
        }
        yy += yg.iter().zip(&viy).map(|(a, c)| a * c).sum::<f64>();
    }
    let a_chol = Cholesky::decompose(&a)?;
    let beta_std = a_chol.solve_vec(&b);
    let rss = (yy - b.iter().zip(&beta_std).map(|(x, y)| x * y).sum::<f64>()).max(1e-300);
    let tau = std::f64::consts::TAU;
    let (sigma2, ll) = match criterion {
        FitCriterion::Ml => {
            let sigma2 = rss / n as f64;
            let ll = -0.5 * (n as f64 * (tau * sigma2).ln() + log_det_v + n as f64);
            (sigma2, ll)
        }
        FitCriterion::Reml => {
            let dof = (n - p) as f64;
            let sigma2 = rss / dof;
            let ll =
                -0.5 * (dof * (tau * sigma2).ln() + log_det_v + a_chol.log_det() + dof);
            (sigma2, ll)
        }
    };
    Ok(ProfileEval {
        ll,
        beta_std,
        sigma2,
        a_inv: a_chol.inverse(),
        _log_det_v: log_det_v,
    })
}

const THETA_MIN: f64 = -20.0;
const THETA_MAX: f64 = 10.0;
const MAX_OUTER: usize = 200;

fn clamp_theta(theta: &mut [f64]) {
    for t in theta.iter_mut() {
        *t = t.clamp(THETA_MIN, THETA_MAX);
    }
}

/// Fit the mixed model
/// y = β0 + Σ βi φi + (participant random effects) + ε.
pub fn fit_lmm(
    rows: &[(PerceptionScores, FeatureVector, String)],
    response: ResponseVector,
    spec: RandomSpec,
    criterion: FitCriterion,
) -> Result<LmmFit> {
    let design = build_design(rows, response)?;
    let q = spec.n_terms();
    let n = design.y.len();
    let n_groups = design.groups.len();

    let objective = |theta: &[f64]| -> Result<f64> {
        Ok(profile_likelihood(&design, spec, criterion, theta)?.ll)
    };
    let gradient = |theta: &[f64]| -> Result<Vec<f64>> {
        let h = 1e-5;
        let mut g = vec![0.0; q];
        let mut probe = theta.to_vec();
        for j in 0..q {
            let orig = probe[j];
            probe[j] = orig + h;
            let up = objective(&probe)?;
            probe[j] = orig - h;
            let down = objective(&probe)?;
            probe[j] = orig;
            g[j] = (up - down) / (2.0 * h);
        }
        Ok(g)
    };

    // BFGS (inverse-Hessian form) with backtracking on the increase
    let mut theta = vec![(0.1f64).ln(); q];
    let mut ll = objective(&theta)?;
    let mut grad = gradient(&theta)?;
    let mut h_inv = SymMat::zeros(q);
    for j in 0..q {
        *h_inv.at_mut(j, j) = 1.0;
    }
    let mut ll_trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..MAX_OUTER {
        iterations += 1;
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < 1e-7 {
            converged = true;
            break;
        }
        // ascent direction d = H_inv * grad
        let mut dir = vec![0.0; q];
        for r in 0..q {
            for c in 0..q {
                dir[r] += h_inv.at(r, c) * grad[c];
            }
        }
        if dir.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>() <= 0.0 {
            // reset to steepest ascent if the approximation went bad
            dir.copy_from_slice(&grad);
            for j in 0..q {
                for k in 0..q {
                    *h_inv.at_mut(j, k) = if j == k { 1.0 } else { 0.0 };
                }
            }
        }
        let mut step = 1.0;
        let mut accepted = false;
        let mut new_theta = theta.clone();
        let mut new_ll = ll;
        for _ in 0..40 {
            for j in 0..q {
                new_theta[j] = theta[j] + step * dir[j];
            }
            clamp_theta(&mut new_theta);
            match objective(&new_theta) {
                Ok(candidate) if candidate >= ll => {
                    new_ll = candidate;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            converged = grad_norm < 1e-4;
            break;
        }
        let new_grad = gradient(&new_theta)?;
        // BFGS inverse-Hessian update (maximization: s = Δθ, y = Δgrad)
        let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad.iter().zip(&new_grad).map(|(g0, g1)| g0 - g1).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            // H = (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let mut hy = vec![0.0; q];
            for r in 0..q {
                for c in 0..q {
                    hy[r] += h_inv.at(r, c) * yv[c];
                }
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let mut new_h = SymMat::zeros(q);
            for r in 0..q {
                for c in 0..q {
                    let v = h_inv.at(r, c) - rho * (s[r] * hy[c] + hy[r] * s[c])
                        + rho * rho * s[r] * s[c] * yhy
                        + rho * s[r] * s[c];
                    *new_h.at_mut(r, c) = v;
                }
            }
            h_inv = new_h;
        }
        let improvement = new_ll - ll;
        theta = new_theta;
        ll = new_ll;
        grad = new_grad;
        ll_trace.push(ll);
        if improvement.abs() < 1e-10 * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last: ll,
        });
    }

    let eval = profile_likelihood(&design, spec, criterion, &theta)?;
    let p = N_FIXED;
    // covariance of the standardized coefficients: σ² (Σ XᵀV⁻¹X)⁻¹
    let mut cov_std = eval.a_inv.clone();
    for v in cov_std.data.iter_mut() {
        *v *= eval.sigma2;
    }
    // back-transform: β_orig = T β_std with T row 0 = [1, -m/s...], rows j = e_j / s_j
    let mut t = SymMat::zeros(p);
    *t.at_mut(0, 0) = 1.0;
    for j in 1..p {
        *t.at_mut(0, j) = -design.std.means[j - 1] / design.std.sds[j - 1];
        *t.at_mut(j, j) = 1.0 / design.std.sds[j - 1];
    }
    let mut beta = vec![0.0; p];
    for r in 0..p {
        for c in 0..p {
            beta[r] += t.at(r, c) * eval.beta_std[c];
        }
    }
    let mut cov = SymMat::zeros(p);
    for r in 0..p {
        for c in 0..p {
            let mut acc = 0.0;
            for i in 0..p {
                for j in 0..p {
                    acc += t.at(r, i) * cov_std.at(i, j) * t.at(c, j);
                }
            }
            *cov.at_mut(r, c) = acc;
        }
    }
    let std_err: Vec<f64> = (0..p).map(|j| cov.at(j, j).max(0.0).sqrt()).collect();
    let p_values: Vec<f64> = beta
        .iter()
        .zip(&std_err)
        .map(|(&b, &se)| {
            if se > 0.0 {
                erfc((b / se).abs() / std::f64::consts::SQRT_2)
            } else {
                f64::NAN
            }
        })
        .collect();
    // random-effect variances on the original covariate scale
    let gamma: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    let random_effect_variances: Vec<f64> = gamma
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let scale = if k == 0 {
                1.0
            } else {
                design.std.sds[k - 1] * design.std.sds[k - 1]
            };
            g * eval.sigma2 / scale
        })
        .collect();
    Ok(LmmFit {
        beta,
        std_err,
        p_values,
        random_effect_variances,
        residual_variance: eval.sigma2,
        log_likelihood: eval.ll,
        n_obs: n,
        n_groups,
        converged,
        iterations,
        ll_trace,
    })
}

/// Complementary error function, fractional error below 1.2e-7.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}
