//! Measurement-error-aware maximum likelihood.
//!
//! The joint likelihood treats the true variant-exposure associations as
//! nuisance parameters. Profiling them out gives
//!
//! ```text
//! l(theta) = -1/2 * sum_j (b_Yj - b*_Xj' theta)^2 / (se_Yj^2 + theta' S_j theta)
//! ```
//!
//! which is maximised by alternating a weighted least squares step for
//! `theta` with a closed-form update of the nuisance associations. Each
//! half-step maximises the joint likelihood in one block, so the profile
//! log-likelihood never decreases across iterations. Once the change in the
//! objective falls below tolerance, a few uphill Newton steps on the profile
//! likelihood remove the remaining linear-convergence lag.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{CausalEstimate, Method, SummaryDataset};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, weighted_least_squares};

/// Condition-number ratio below which the information matrix is singular.
const INFO_TOL: f64 = 1e-12;
const NEWTON_MAX_STEPS: usize = 20;
const NEWTON_BACKTRACK: usize = 30;
/// Gradient size at which refinement stops.
const NEWTON_GRAD_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Convergence threshold on the change in profile log-likelihood.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of random initialisations of the nuisance associations.
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 1000,
            n_starts: 5,
            seed: 0,
        }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidOption(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidOption("max_iterations must be >= 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidOption("n_starts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Current estimates of the true variant-exposure associations (`J x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceState {
    pub beta_tilde: DMatrix<f64>,
}

impl NuisanceState {
    /// Maximises the joint likelihood over `theta` for fixed nuisance values.
    pub fn theta_step(&self, dataset: &SummaryDataset) -> Result<DVector<f64>> {
        Ok(weighted_least_squares(&self.beta_tilde, dataset.beta_y(), &dataset.weights())?.coef)
    }

    /// Maximises the joint likelihood over the nuisance values for fixed
    /// `theta`.
    ///
    /// Uses the Woodbury form `b*_j + S_j theta e_j / v_j` of
    /// `(theta theta'/se^2 + S_j^{-1})^{-1} (b_Yj theta/se^2 + S_j^{-1} b*_j)`,
    /// which stays defined for singular `S_j`: components in the null space of
    /// `S_j` remain at `b*_j`, and `S_j = 0` gives `b*_j` exactly.
    pub fn update(theta: &DVector<f64>, dataset: &SummaryDataset) -> Result<Self> {
        let j = dataset.n_variants();
        let k = dataset.n_exposures();
        let mut beta_tilde = dataset.beta_x().clone();
        for v in 0..j {
            let s = &dataset.sigma_x()[v];
            let s_theta = s * theta;
            let var = dataset.se_y()[v].powi(2) + theta.dot(&s_theta);
            let resid = dataset.beta_y()[v] - dataset.beta_x().row(v).transpose().dot(theta);
            let scale = resid / var;
            if !scale.is_finite() {
                return Err(Error::NuisanceUpdate { variant: v });
            }
            for c in 0..k {
                beta_tilde[(v, c)] += s_theta[c] * scale;
            }
        }
        Ok(Self { beta_tilde })
    }
}

/// Profile log-likelihood at `theta`.
pub fn profile_loglik(theta: &DVector<f64>, dataset: &SummaryDataset) -> f64 {
    let mut total = 0.0;
    for v in 0..dataset.n_variants() {
        let s = &dataset.sigma_x()[v];
        let var = dataset.se_y()[v].powi(2) + theta.dot(&(s * theta));
        let resid = dataset.beta_y()[v] - dataset.beta_x().row(v).transpose().dot(theta);
        total += resid * resid / var;
    }
    -0.5 * total
}

/// Standardised residual `g_j = e_j / sqrt(v_j)` of one variant together with
/// its gradient and Hessian in `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantScore {
    pub g: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Evaluates `g_j`, its gradient and Hessian for variant `j`.
///
/// With `s = S_j theta`, `e = b_Yj - b*_j' theta` and `v = se^2 + theta' s`:
///
/// ```text
/// dg/dtheta_k         = -(v^{-1/2} b*_k + v^{-3/2} e s_k)
/// d2g/dtheta_k dtheta_l = v^{-3/2} (s_l b*_k + s_k b*_l - e S_kl) + 3 v^{-5/2} e s_k s_l
/// ```
pub fn variant_score(theta: &DVector<f64>, dataset: &SummaryDataset, j: usize) -> VariantScore {
    let k = dataset.n_exposures();
    let sigma = &dataset.sigma_x()[j];
    let b = dataset.beta_x().row(j).transpose();
    let s = sigma * theta;
    let v = dataset.se_y()[j].powi(2) + theta.dot(&s);
    let e = dataset.beta_y()[j] - b.dot(theta);
    let v_half = v.sqrt();
    let v_3 = v * v_half;
    let v_5 = v_3 * v;

    let g = e / v_half;
    let gradient = DVector::from_fn(k, |c, _| -(b[c] / v_half + e * s[c] / v_3));
    let hessian = DMatrix::from_fn(k, k, |a, c| {
        (s[c] * b[a] + s[a] * b[c] - e * sigma[(a, c)]) / v_3 + 3.0 * e * s[a] * s[c] / v_5
    });
    VariantScore { g, gradient, hessian }
}

/// Sandwich covariance `I^{-1} Omega I^{-1}` with
/// `Omega = sum_j dg_j dg_j'` and `I = sum_j (dg_j dg_j' + g_j d2g_j)`.
pub fn sandwich_variance(theta: &DVector<f64>, dataset: &SummaryDataset) -> Result<DMatrix<f64>> {
    let k = dataset.n_exposures();
    let mut omega = DMatrix::zeros(k, k);
    let mut info = DMatrix::zeros(k, k);
    for j in 0..dataset.n_variants() {
        let sc = variant_score(theta, dataset, j);
        let outer = &sc.gradient * sc.gradient.transpose();
        info += &outer + &sc.hessian * sc.g;
        omega += outer;
    }
    symmetrize(&mut info);
    let sv = info.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max.is_finite() && max > 0.0 && min > INFO_TOL * max) {
        return Err(Error::SingularInformation {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let info_inv = info.try_inverse().ok_or(Error::SingularInformation { condition: max / min })?;
    let mut cov = &info_inv * omega * &info_inv;
    symmetrize(&mut cov);
    Ok(cov)
}

/// Per-start record of an MLE run.
#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub start_index: usize,
    pub theta: DVector<f64>,
    /// Profile log-likelihood after each theta step and each refinement step.
    pub loglik: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub estimate: CausalEstimate,
    pub best_start: usize,
    pub starts: Vec<StartTrace>,
}

/// Factor `L` with `L L' = S`, zero along degenerate directions.
fn covariance_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(s.clone()) {
        return ch.l();
    }
    let k = s.nrows();
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let mut l = eig.eigenvectors;
    for c in 0..k {
        let root = eig.eigenvalues[c].max(0.0).sqrt();
        l.column_mut(c).scale_mut(root);
    }
    l
}

fn initial_state(dataset: &SummaryDataset, factors: &[DMatrix<f64>], rng: &mut ChaCha8Rng) -> NuisanceState {
    let k = dataset.n_exposures();
    let mut beta_tilde = dataset.beta_x().clone();
    for (v, l) in factors.iter().enumerate() {
        let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let noise = l * z;
        for c in 0..k {
            beta_tilde[(v, c)] += noise[c];
        }
    }
    NuisanceState { beta_tilde }
}

fn start_rng(seed: u64, start_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start_index as u64);
    rng
}

fn run_start(
    dataset: &SummaryDataset,
    factors: &[DMatrix<f64>],
    options: &MleOptions,
    start_index: usize,
) -> Result<StartTrace> {
    let mut rng = start_rng(options.seed, start_index);
    let mut state = initial_state(dataset, factors, &mut rng);
    let mut loglik: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut theta = state.theta_step(dataset)?;
    for iter in 0..options.max_iterations {
        if iter > 0 {
            state = NuisanceState::update(&theta, dataset)?;
            theta = state.theta_step(dataset)?;
        }
        let ll = profile_loglik(&theta, dataset);
        if let Some(&prev) = loglik.last() {
            if (ll - prev).abs() < options.tolerance {
                loglik.push(ll);
                converged = true;
                break;
            }
        }
        loglik.push(ll);
    }
    if converged {
        theta = newton_refine(theta, dataset, &mut loglik);
    }
    Ok(StartTrace {
        start_index,
        theta,
        loglik,
        converged,
    })
}

/// Safeguarded Newton steps on the profile log-likelihood after the
/// alternating iterations have met their tolerance. The alternating scheme
/// converges linearly, so stopping on a small change in the objective can
/// leave a visible gradient when the information is large. Steps are only
/// taken uphill, so the trace stays monotone.
fn newton_refine(mut theta: DVector<f64>, dataset: &SummaryDataset, loglik: &mut Vec<f64>) -> DVector<f64> {
    let k = dataset.n_exposures();
    let mut ll = *loglik.last().unwrap_or(&profile_loglik(&theta, dataset));
    for _ in 0..NEWTON_MAX_STEPS {
        let mut grad = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        for j in 0..dataset.n_variants() {
            let sc = variant_score(&theta, dataset, j);
            grad -= &sc.gradient * sc.g;
            info += &sc.gradient * sc.gradient.transpose() + &sc.hessian * sc.g;
        }
        if grad.amax() < NEWTON_GRAD_TOL {
            break;
        }
        symmetrize(&mut info);
        let Some(step) = Cholesky::new(info).map(|c| c.solve(&grad)) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_BACKTRACK {
            let cand = &theta + &step * scale;
            let cand_ll = profile_loglik(&cand, dataset);
            if cand_ll >= ll {
                theta = cand;
                ll = cand_ll;
                loglik.push(ll);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    theta
}

/// Multi-start MLE, returning every start's trace alongside the estimate.
pub fn fit_mle_detailed(dataset: &SummaryDataset, options: &MleOptions) -> Result<MleFit> {
    options.validate()?;
    let factors: Vec<DMatrix<f64>> = dataset.sigma_x().iter().map(covariance_factor).collect();

    let mut starts = Vec::with_capacity(options.n_starts);
    let mut last_err = None;
    for s in 0..options.n_starts {
        match run_start(dataset, &factors, options, s) {
            Ok(t) => starts.push(t),
            Err(e) => last_err = Some(e),
        }
    }
    let best = starts
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, t)| {
            let ll = *t.loglik.last().unwrap_or(&f64::NEG_INFINITY);
            match acc {
                Some((_, best_ll)) if !(ll > best_ll) => acc,
                _ => Some((i, ll)),
            }
        });
    let Some((best_pos, best_ll)) = best else {
        return Err(last_err.unwrap_or(Error::InvalidOption("no MLE starts ran".into())));
    };
    let trace = &starts[best_pos];
    let covariance = sandwich_variance(&trace.theta, dataset)?;
    let estimate = CausalEstimate {
        theta: trace.theta.clone(),
        covariance,
        method: if dataset.trait_correlation().is_some() { Method::MleCor } else { Method::Mle },
        converged: trace.converged,
        iterations: trace.loglik.len(),
        final_objective: best_ll,
    };
    Ok(MleFit {
        estimate,
        best_start: trace.start_index,
        starts,
    })
}

/// Measurement-error-aware MLE with sandwich covariance.
///
/// The method tag is `MLE_COR` when the dataset carries a trait correlation
/// and `MLE` otherwise. Non-convergence is reported through the `converged`
/// flag rather than as an error.
pub fn fit_mle(dataset: &SummaryDataset, options: &MleOptions) -> Result<CausalEstimate> {
    fit_mle_detailed(dataset, options).map(|f| f.estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::apply_trait_correlation;
    use crate::ivw::fit_ivw;
    use rand::Rng;

    fn synthetic(seed: u64, j: usize, me_scale: f64) -> SummaryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx_true = DMatrix::from_fn(j, 2, |_, _| rng.random_range(0.08..0.2));
        let se_x = DMatrix::from_fn(j, 2, |_, c| me_scale * if c == 0 { 0.03 } else { 0.01 });
        let se_y = DVector::from_fn(j, |_, _| rng.random_range(0.01..0.03));
        let theta = [0.2, 0.0];
        let bx = DMatrix::from_fn(j, 2, |r, c| {
            bx_true[(r, c)] + se_x[(r, c)] * rng.sample::<f64, _>(StandardNormal)
        });
        let by = DVector::from_fn(j, |r, _| {
            theta[0] * bx_true[(r, 0)] + theta[1] * bx_true[(r, 1)] + se_y[r] * rng.sample::<f64, _>(StandardNormal)
        });
        SummaryDataset::from_standard_errors((0..j).map(|i| format!("v{i}")).collect(), by, se_y, bx, &se_x).unwrap()
    }

    #[test]
    fn profile_at_zero_theta() {
        let d = synthetic(1, 20, 1.0);
        let ll = profile_loglik(&DVector::zeros(2), &d);
        let expected: f64 = -0.5 * (0..20).map(|j| (d.beta_y()[j] / d.se_y()[j]).powi(2)).sum::<f64>();
        assert!((ll - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn profile_without_error_is_ivw_objective() {
        let d = synthetic(2, 20, 0.0);
        let ivw = fit_ivw(&d).unwrap();
        let ll = profile_loglik(&ivw.theta, &d);
        assert!((ll + 0.5 * ivw.final_objective).abs() < 1e-10);
    }

    #[test]
    fn profile_matches_term_by_term_sum() {
        let d = apply_trait_correlation(
            &synthetic(3, 10, 1.0),
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let theta = DVector::from_vec(vec![0.17, -0.04]);
        let mut oracle = 0.0;
        for j in 0..10 {
            let s = &d.sigma_x()[j];
            let (t1, t2) = (theta[0], theta[1]);
            let quad = t1 * t1 * s[(0, 0)] + 2.0 * t1 * t2 * s[(0, 1)] + t2 * t2 * s[(1, 1)];
            let r = d.beta_y()[j] - d.beta_x()[(j, 0)] * t1 - d.beta_x()[(j, 1)] * t2;
            oracle -= 0.5 * r * r / (d.se_y()[j].powi(2) + quad);
        }
        assert!((profile_loglik(&theta, &d) - oracle).abs() < 1e-12);
    }

    #[test]
    fn reduces_to_ivw_without_measurement_error() {
        let d = synthetic(4, 40, 0.0);
        let ivw = fit_ivw(&d).unwrap();
        let mle = fit_mle(&d, &MleOptions::default()).unwrap();
        assert!((mle.theta - &ivw.theta).amax() < 1e-8);
        assert!(mle.converged);
        assert!((mle.covariance - ivw.covariance).amax() < 1e-10);
    }

    #[test]
    fn woodbury_update_matches_direct_solve() {
        let d = apply_trait_correlation(
            &synthetic(5, 12, 1.0),
            &DMatrix::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 1.0]),
        )
        .unwrap();
        let theta = DVector::from_vec(vec![0.3, 0.1]);
        let state = NuisanceState::update(&theta, &d).unwrap();
        for j in 0..12 {
            let s_inv = d.sigma_x()[j].clone().try_inverse().unwrap();
            let w = d.se_y()[j].powi(-2);
            let lhs = &theta * theta.transpose() * w + &s_inv;
            let rhs = &theta * (w * d.beta_y()[j]) + &s_inv * d.beta_x().row(j).transpose();
            let direct = lhs.lu().solve(&rhs).unwrap();
            for c in 0..2 {
                assert!((state.beta_tilde[(j, c)] - direct[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_sigma_keeps_null_space_fixed() {
        let d = synthetic(6, 15, 1.0);
        let sx: Vec<DMatrix<f64>> = d
            .sigma_x()
            .iter()
            .map(|s| DMatrix::from_row_slice(2, 2, &[s[(0, 0)], 0.0, 0.0, 0.0]))
            .collect();
        let d = d.with_sigma_x(sx).unwrap();
        let state = NuisanceState::update(&DVector::from_vec(vec![0.2, 0.1]), &d).unwrap();
        for j in 0..15 {
            assert_eq!(state.beta_tilde[(j, 1)], d.beta_x()[(j, 1)]);
        }
        let fit = fit_mle(&d, &MleOptions::default()).unwrap();
        assert!(fit.converged);
    }

    #[test]
    fn loglik_is_monotone() {
        let d = apply_trait_correlation(
            &synthetic(7, 40, 2.0),
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let fit = fit_mle_detailed(&d, &MleOptions::default()).unwrap();
        for t in &fit.starts {
            for w in t.loglik.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "decrease {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn stationary_at_convergence() {
        let d = synthetic(8, 40, 2.0);
        let est = fit_mle(&d, &MleOptions::default()).unwrap();
        assert!(est.converged);
        let h = 1e-6;
        for k in 0..2 {
            let mut up = est.theta.clone();
            let mut dn = est.theta.clone();
            up[k] += h;
            dn[k] -= h;
            let grad = (profile_loglik(&up, &d) - profile_loglik(&dn, &d)) / (2.0 * h);
            assert!(grad.abs() < 1e-4, "gradient {grad}");
        }
    }

    #[test]
    fn reproducible_given_seed() {
        let d = synthetic(9, 40, 2.0);
        let opts = MleOptions { seed: 77, ..Default::default() };
        let a = fit_mle(&d, &opts).unwrap();
        let b = fit_mle(&d, &opts).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.covariance, b.covariance);
    }

    #[test]
    fn method_tag_follows_correlation() {
        let d = synthetic(10, 30, 1.0);
        assert_eq!(fit_mle(&d, &MleOptions::default()).unwrap().method, Method::Mle);
        let c = apply_trait_correlation(&d, &DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])).unwrap();
        assert_eq!(fit_mle(&c, &MleOptions::default()).unwrap().method, Method::MleCor);
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let d = synthetic(11, 40, 3.0);
        let opts = MleOptions { max_iterations: 1, ..Default::default() };
        let est = fit_mle(&d, &opts).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 1);
    }

    #[test]
    fn invalid_options_rejected() {
        let d = synthetic(12, 20, 1.0);
        for opts in [
            MleOptions { tolerance: 0.0, ..Default::default() },
            MleOptions { max_iterations: 0, ..Default::default() },
            MleOptions { n_starts: 0, ..Default::default() },
        ] {
            assert!(matches!(fit_mle(&d, &opts), Err(Error::InvalidOption(_))));
        }
    }

    #[test]
    fn score_sign_invariance() {
        // Flipping g's sign flips its derivatives; outer products and g * H are unchanged.
        let d = synthetic(13, 10, 1.5);
        let theta = DVector::from_vec(vec![0.25, -0.05]);
        for j in 0..10 {
            let sc = variant_score(&theta, &d, j);
            let neg_outer = (-&sc.gradient) * (-&sc.gradient).transpose();
            let pos_outer = &sc.gradient * sc.gradient.transpose();
            assert_eq!(neg_outer, pos_outer);
            assert_eq!((-&sc.hessian) * (-sc.g), &sc.hessian * sc.g);
        }
    }

    #[test]
    fn half_sum_of_squares_is_negative_profile() {
        let d = synthetic(14, 25, 1.0);
        let theta = DVector::from_vec(vec![0.1, 0.3]);
        let half_ss: f64 = (0..25).map(|j| variant_score(&theta, &d, j).g.powi(2)).sum::<f64>() * 0.5;
        assert!((half_ss + profile_loglik(&theta, &d)).abs() < 1e-10);
    }
}
