use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

const CHUNK: usize = 8192;
/// Variance used when every sample is identical.
const DEGENERATE_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub n_components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Larger inputs are subsampled (without replacement, seeded) to this size.
    pub max_samples: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { n_components: 2, max_iters: 200, tol: 1e-6, seed: 0, max_samples: 500_000 }
    }
}

/// A fitted 1-D Gaussian mixture, components sorted by ascending mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmModel<T: Real> {
    pub weights: Vec<T>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
    /// Mean per-sample log-likelihood before each M-step, plus the final value.
    pub log_likelihood_trace: Vec<T>,
    pub variance_floor: T,
    pub converged: bool,
    pub degenerate: bool,
}

impl<T: Real> GmmModel<T> {
    #[inline]
    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    /// Log of `w_k * N(x; mu_k, var_k)`.
    fn log_weighted_density(&self, k: usize, x: T) -> T {
        log_weighted(self.weights[k], self.means[k], self.variances[k], x)
    }
}

fn log_weighted<T: Real>(w: T, mu: T, var: T, x: T) -> T {
    let d = x - mu;
    w.ln() - T::lit(0.5) * (T::two_pi() * var).ln() - d * d / (var + var)
}

fn check(config: &GmmConfig) -> Result<()> {
    if config.n_components < 2 {
        return Err(Error::InvalidParameter(format!("n_components must be >= 2, got {}", config.n_components)));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be positive".into()));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be nonnegative, got {}", config.tol)));
    }
    if config.max_samples < 10 * config.n_components {
        return Err(Error::InvalidParameter("max_samples is below 10 samples per component".into()));
    }
    Ok(())
}

fn subsample<T: Real>(samples: &[T], config: &GmmConfig) -> Vec<T> {
    if samples.len() <= config.max_samples {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut idx = rand::seq::index::sample(&mut rng, samples.len(), config.max_samples).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| samples[i]).collect()
}

fn chunked_sum<T: Real>(xs: &[T], f: impl Fn(T) -> T + Sync) -> T {
    let partial: Vec<T> = xs.par_chunks(CHUNK).map(|c| c.iter().fold(T::zero(), |a, &x| a + f(x))).collect();
    partial.into_iter().fold(T::zero(), |a, b| a + b)
}

/// Fit a 1-D Gaussian mixture by expectation-maximization.
///
/// Components start at the `(i + 0.5) / N` quantiles with the global variance
/// and uniform weights. If two starting means coincide, the quantiles of the
/// distinct sample values are used instead. Iteration stops once the mean
/// log-likelihood improves by less than `tol`, or after `max_iters` M-steps.
/// Variances never drop below `1e-6` times the global variance.
pub fn fit_gmm<T: Real>(samples: &[T], config: &GmmConfig) -> Result<GmmModel<T>> {
    check(config)?;
    let k = config.n_components;
    if samples.len() < 10 * k {
        return Err(Error::InsufficientSamples { needed: 10 * k, got: samples.len() });
    }
    let xs = subsample(samples, config);
    let n = T::from_count(xs.len());
    let mean = chunked_sum(&xs, |x| x) / n;
    let global_var = chunked_sum(&xs, |x| (x - mean) * (x - mean)) / n;
    let uniform = vec![T::one() / T::from_count(k); k];

    if global_var <= T::zero() {
        log::warn!("gmm: all {} samples are identical", xs.len());
        let floor = T::lit(DEGENERATE_VARIANCE);
        return Ok(GmmModel {
            weights: uniform,
            means: vec![mean; k],
            variances: vec![floor; k],
            log_likelihood_trace: Vec::new(),
            variance_floor: floor,
            converged: true,
            degenerate: true,
        });
    }

    let floor = global_var * T::lit(1e-6);
    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let quantiles = |v: &[T]| -> Vec<T> {
        (0..k)
            .map(|i| {
                let q = (i as f64 + 0.5) / k as f64;
                v[((q * v.len() as f64) as usize).min(v.len() - 1)]
            })
            .collect()
    };
    let mut means = quantiles(&sorted);
    if means.windows(2).any(|w| w[0] == w[1]) {
        // a dominant plateau swallowed several quantiles; identical components
        // would never separate, so seed from the distinct values instead
        sorted.dedup();
        means = quantiles(&sorted);
    }
    let mut model = GmmModel {
        weights: uniform,
        means,
        variances: vec![global_var; k],
        log_likelihood_trace: Vec::new(),
        variance_floor: floor,
        converged: false,
        degenerate: false,
    };

    let tol = T::lit(config.tol);
    let mut resp = vec![T::zero(); xs.len() * k];
    for iter in 0..=config.max_iters {
        let ll = e_step(&model, &xs, &mut resp) / n;
        if let Some(&prev) = model.log_likelihood_trace.last() {
            model.log_likelihood_trace.push(ll);
            if (ll - prev).abs() < tol {
                model.converged = true;
                break;
            }
        } else {
            model.log_likelihood_trace.push(ll);
        }
        if iter == config.max_iters {
            break;
        }
        m_step(&mut model, &xs, &resp);
    }
    sort_components(&mut model);
    Ok(model)
}

/// Fills responsibilities and returns the total log-likelihood.
fn e_step<T: Real>(model: &GmmModel<T>, xs: &[T], resp: &mut [T]) -> T {
    let k = model.n_components();
    let partial: Vec<T> = xs
        .par_chunks(CHUNK)
        .zip(resp.par_chunks_mut(CHUNK * k))
        .map(|(xc, rc)| {
            let mut ll = T::zero();
            for (x, r) in xc.iter().zip(rc.chunks_mut(k)) {
                let mut hi = T::min_value().expect("bounded");
                for (c, slot) in r.iter_mut().enumerate() {
                    *slot = model.log_weighted_density(c, *x);
                    hi = hi.max(*slot);
                }
                let mut s = T::zero();
                for slot in r.iter_mut() {
                    *slot = (*slot - hi).exp();
                    s += *slot;
                }
                for slot in r.iter_mut() {
                    *slot /= s;
                }
                ll += hi + s.ln();
            }
            ll
        })
        .collect();
    partial.into_iter().fold(T::zero(), |a, b| a + b)
}

fn m_step<T: Real>(model: &mut GmmModel<T>, xs: &[T], resp: &[T]) {
    let k = model.n_components();
    let sums = |f: &(dyn Fn(usize, T, T) -> T + Sync)| -> Vec<T> {
        let partial: Vec<Vec<T>> = xs
            .par_chunks(CHUNK)
            .zip(resp.par_chunks(CHUNK * k))
            .map(|(xc, rc)| {
                let mut acc = vec![T::zero(); k];
                for (x, r) in xc.iter().zip(rc.chunks(k)) {
                    for c in 0..k {
                        acc[c] += f(c, *x, r[c]);
                    }
                }
                acc
            })
            .collect();
        partial.into_iter().fold(vec![T::zero(); k], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
    };
    let nk = sums(&|_, _, r| r);
    let sx = sums(&|_, x, r| r * x);
    let n = T::from_count(xs.len());
    let means: Vec<T> = (0..k).map(|c| if nk[c] > T::zero() { sx[c] / nk[c] } else { model.means[c] }).collect();
    let sv = sums(&|c, x, r| r * (x - means[c]) * (x - means[c]));
    for c in 0..k {
        if nk[c] > T::zero() {
            model.means[c] = means[c];
            model.variances[c] = (sv[c] / nk[c]).max(model.variance_floor);
        }
        model.weights[c] = nk[c] / n;
    }
    // keep the simplex exact against rounding
    let total = model.weights.iter().fold(T::zero(), |a, &b| a + b);
    model.weights.iter_mut().for_each(|w| *w /= total);
}

fn sort_components<T: Real>(model: &mut GmmModel<T>) {
    let mut order: Vec<usize> = (0..model.n_components()).collect();
    order.sort_by(|&a, &b| model.means[a].partial_cmp(&model.means[b]).expect("finite means"));
    model.weights = order.iter().map(|&i| model.weights[i]).collect();
    model.means = order.iter().map(|&i| model.means[i]).collect();
    model.variances = order.iter().map(|&i| model.variances[i]).collect();
}

/// Decision boundary of a two-component model: the intensity between the means
/// where the weighted densities are equal. Falls back to the midpoint when the
/// quadratic has no root strictly between the means.
pub fn gmm_threshold<T: Real>(model: &GmmModel<T>) -> Result<T> {
    if model.n_components() != 2 {
        return Err(Error::InvalidParameter(format!(
            "gmm threshold needs exactly 2 components, got {}",
            model.n_components()
        )));
    }
    let (lo, hi) = if model.means[0] <= model.means[1] { (0, 1) } else { (1, 0) };
    let (m0, m1) = (model.means[lo], model.means[hi]);
    if !(m1 > m0) {
        return Err(Error::InvalidParameter("gmm components have equal means".into()));
    }
    let (v0, v1) = (model.variances[lo], model.variances[hi]);
    let (w0, w1) = (model.weights[lo], model.weights[hi]);
    let half = T::lit(0.5);
    // log(w0 phi0) - log(w1 phi1) = a x^2 + b x + c
    let a = half / v1 - half / v0;
    let b = m0 / v0 - m1 / v1;
    let c = half * m1 * m1 / v1 - half * m0 * m0 / v0 + (w0 / w1).ln() - half * (v0 / v1).ln();
    let mid = (m0 + m1) * half;
    let inside = |x: T| x > m0 && x < m1;

    let mut roots = Vec::with_capacity(2);
    if a.abs() <= T::default_epsilon() * (half / v0 + half / v1) {
        if b != T::zero() {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - T::lit(4.0) * a * c;
        if disc >= T::zero() {
            let q = -half * (b + disc.sqrt().copysign(b));
            if q != T::zero() {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(T::zero());
            }
        }
    }
    let best = roots
        .into_iter()
        .filter(|&x| inside(x))
        .min_by(|x, y| (*x - mid).abs().partial_cmp(&(*y - mid).abs()).expect("finite roots"));
    Ok(best.unwrap_or_else(|| {
        log::warn!("gmm threshold: no density crossing between the means, using midpoint");
        mid
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| Normal::new(100.0, 5.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| Normal::new(1000.0, 5.0).unwrap().sample(&mut rng)).collect();
        (a, b)
    }

    fn model(w: [f64; 2], m: [f64; 2], v: [f64; 2]) -> GmmModel<f64> {
        GmmModel {
            weights: w.to_vec(),
            means: m.to_vec(),
            variances: v.to_vec(),
            log_likelihood_trace: Vec::new(),
            variance_floor: 1e-9,
            converged: true,
            degenerate: false,
        }
    }

    /// Bisection on the log density difference, independent of the quadratic.
    fn bisect_crossing(w: [f64; 2], m: [f64; 2], v: [f64; 2]) -> f64 {
        let f = |x: f64| {
            let l = |i: usize| w[i].ln() - 0.5 * (2.0 * std::f64::consts::PI * v[i]).ln() - (x - m[i]).powi(2) / (2.0 * v[i]);
            l(0) - l(1)
        };
        let (mut lo, mut hi) = (m[0], m[1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn recovers_well_separated_means() {
        let (a, b) = two_clusters(100_000, 1);
        let oracle = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let mut all = a.clone();
        all.extend(&b);
        let m = fit_gmm(&all, &GmmConfig::default()).unwrap();
        assert!((m.means[0] - oracle(&a)).abs() < 1.0);
        assert!((m.means[1] - oracle(&b)).abs() < 1.0);
        assert!((m.means[0] - 100.0).abs() < 1.0 && (m.means[1] - 1000.0).abs() < 1.0);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.converged);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let m = fit_gmm(&vec![42.0f64; 100], &GmmConfig::default()).unwrap();
        assert!(m.degenerate);
        assert!(m.variances.iter().all(|&v| v == m.variance_floor && v > 0.0));
        assert!(gmm_threshold(&m).is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        let e = fit_gmm(&[1.0f64, 2.0, 3.0], &GmmConfig::default()).unwrap_err();
        assert!(matches!(e, Error::InsufficientSamples { needed: 20, got: 3 }));
    }

    #[test]
    fn subsampling_is_seeded() {
        let (a, b) = two_clusters(20_000, 2);
        let mut all = a;
        all.extend(b);
        let cfg = GmmConfig { max_samples: 5000, seed: 9, ..Default::default() };
        assert_eq!(fit_gmm(&all, &cfg).unwrap(), fit_gmm(&all, &cfg).unwrap());
    }

    #[test]
    fn dominant_plateau_still_splits() {
        let mut xs = vec![0.0f64; 950];
        xs.extend(vec![10.0; 50]);
        let m = fit_gmm(&xs, &GmmConfig::default()).unwrap();
        assert!((m.means[0] - 0.0).abs() < 1e-6 && (m.means[1] - 10.0).abs() < 1e-6, "{:?}", m.means);
        assert!((m.weights[1] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn symmetric_threshold_is_midpoint() {
        assert_eq!(gmm_threshold(&model([0.5, 0.5], [100.0, 1000.0], [25.0, 25.0])).unwrap(), 550.0);
    }

    #[test]
    fn equal_means_rejected() {
        assert!(gmm_threshold(&model([0.5, 0.5], [10.0, 10.0], [1.0, 2.0])).is_err());
        let mut three = model([0.5, 0.5], [1.0, 2.0], [1.0, 1.0]);
        three.weights.push(0.0);
        three.means.push(3.0);
        three.variances.push(1.0);
        assert!(gmm_threshold(&three).is_err());
    }

    #[test]
    fn unequal_weights_shift_toward_light_component() {
        let (w, m, v) = ([0.9, 0.1], [100.0, 1000.0], [25.0, 25.0]);
        let t = gmm_threshold(&model(w, m, v)).unwrap();
        assert!(t > 550.0);
        assert!((t - bisect_crossing(w, m, v)).abs() < 1e-9, "{t}");
    }

    #[test]
    fn unequal_variances_match_bisection() {
        let (w, m, v) = ([0.3, 0.7], [0.0, 40.0], [16.0, 400.0]);
        let t = gmm_threshold(&model(w, m, v)).unwrap();
        assert!((t - bisect_crossing(w, m, v)).abs() < 1e-8, "{t}");
    }

    #[test]
    fn no_crossing_falls_back_to_midpoint() {
        // a heavy wide component dominates everywhere between the means
        let t = gmm_threshold(&model([0.001, 0.999], [0.0, 1.0], [0.01, 100.0])).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn single_precision_fit() {
        let (a, b) = two_clusters(5_000, 3);
        let all: Vec<f32> = a.iter().chain(&b).map(|&x| x as f32).collect();
        let m = fit_gmm(&all, &GmmConfig::default()).unwrap();
        assert!((m.means[0] - 100.0).abs() < 1.0 && (m.means[1] - 1000.0).abs() < 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn log_likelihood_never_decreases(seed in any::<u64>(), k in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..600)
                .map(|i| if i % 3 == 0 { rng.random_range(0.0..50.0) } else { rng.random_range(30.0..200.0) })
                .collect();
            let cfg = GmmConfig { n_components: k, max_iters: 60, tol: 0.0, seed, ..Default::default() };
            let m = fit_gmm(&xs, &cfg).unwrap();
            for w in m.log_likelihood_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-7, "{} -> {}", w[0], w[1]);
            }
            prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(m.variances.iter().all(|&v| v >= m.variance_floor));
        }
    }
}
