use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SampleCloud;

/// Bins used by [`mode_estimate`] and [`ReturnCdf::bin_masses`].
pub const MODE_BINS: usize = 100;
/// Half-width (in bins) of the moving average applied before taking the mode.
const MODE_SMOOTHING: usize = 2;
/// Grid on which the logistic fit is compared to the empirical cdf.
const FIT_GRID: usize = 200;
const FIT_MAX_DEVIATION: f64 = 0.05;

/// How [`estimate_cdf`] should model `F_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdfMethod {
    Empirical,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdfKind {
    /// Sorted sample returns.
    Empirical { sorted: Vec<f64> },
    /// `F(v) = (1 + exp(-growth (v - midpoint)))^(-nu)`.
    Logistic { growth: f64, midpoint: f64, nu: f64 },
}

/// Estimate of one agent's expected-return distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnCdf {
    pub agent: usize,
    pub kind: CdfKind,
    /// `[min_J, max_J]`.
    pub support: (f64, f64),
    pub samples: usize,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn logistic(v: f64, growth: f64, midpoint: f64, nu: f64) -> f64 {
    (-nu * softplus(-growth * (v - midpoint))).exp()
}

/// Piecewise-linear interpolation through `(x_0, 0)`, `(x_k, (k + 1/2)/N)`
/// for interior samples and `(x_{N-1}, 1)`.
fn empirical(sorted: &[f64], v: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if v < sorted[0] {
        return 0.0;
    }
    if v >= sorted[n - 1] {
        return 1.0;
    }
    let knot = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k == n - 1 {
            1.0
        } else {
            (k as f64 + 0.5) / n as f64
        }
    };
    let hi = sorted.partition_point(|&x| x <= v);
    let lo = hi - 1;
    let (x0, x1) = (sorted[lo], sorted[hi]);
    let (y0, y1) = (knot(lo), knot(hi));
    if x1 <= x0 {
        return y1;
    }
    y0 + (y1 - y0) * (v - x0) / (x1 - x0)
}

impl ReturnCdf {
    /// `F(v)`, nondecreasing in `v`.
    pub fn eval(&self, v: f64) -> f64 {
        match &self.kind {
            CdfKind::Empirical { sorted } => empirical(sorted, v),
            CdfKind::Logistic { growth, midpoint, nu } => logistic(v, *growth, *midpoint, *nu),
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.kind, CdfKind::Empirical { .. })
    }

    /// Probability mass of each of `bins` equal-width bins over the support.
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        let (lo, hi) = self.support;
        let width = (hi - lo) / bins as f64;
        (0..bins)
            .map(|b| {
                let right = if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width };
                self.eval(right) - self.eval(lo + b as f64 * width)
            })
            .collect()
    }
}

/// Estimates `F_i` from the returns `⟨x, reward⟩` of the cloud points.
///
/// The logistic fit falls back to the empirical cdf when it deviates from it
/// by more than 0.05 anywhere on the fit grid or misses the support ends.
pub fn estimate_cdf(
    cloud: &SampleCloud,
    agent: usize,
    reward: &[f64],
    support: (f64, f64),
    method: CdfMethod,
) -> ReturnCdf {
    let mut sorted = cloud.returns(reward);
    sorted.sort_by(f64::total_cmp);
    let samples = sorted.len();
    let empirical_cdf = ReturnCdf {
        agent,
        kind: CdfKind::Empirical { sorted },
        support,
        samples,
    };
    if method == CdfMethod::Empirical {
        return empirical_cdf;
    }
    match fit_logistic(&empirical_cdf) {
        Some(kind) => ReturnCdf {
            agent,
            kind,
            support,
            samples,
        },
        None => {
            log::info!("logistic fit rejected for agent {agent}; using the empirical cdf");
            empirical_cdf
        }
    }
}

/// Levenberg–Marquardt least squares over `(ln growth, midpoint, ln nu)` in
/// support-scaled coordinates.
fn fit_logistic(emp: &ReturnCdf) -> Option<CdfKind> {
    let (lo, hi) = emp.support;
    let width = hi - lo;
    if width <= 0.0 {
        return None;
    }
    let grid: Vec<f64> = (0..FIT_GRID).map(|j| (j as f64 + 0.5) / FIT_GRID as f64).collect();
    let target: Vec<f64> = grid.iter().map(|&u| emp.eval(lo + u * width)).collect();
    let model = |p: &Vector3<f64>, u: f64| logistic(u, p[0].exp(), p[1], p[2].exp());
    let cost = |p: &Vector3<f64>| -> f64 {
        grid.iter().zip(&target).map(|(&u, &y)| (model(p, u) - y).powi(2)).sum()
    };
    let median = grid
        .iter()
        .zip(&target)
        .find(|(_, &y)| y >= 0.5)
        .map_or(0.5, |(&u, _)| u);
    let mut p = Vector3::new(10f64.ln(), median, 0.0);
    let mut current = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&u, &y) in grid.iter().zip(&target) {
            let f = model(&p, u);
            let mut grad = Vector3::zeros();
            for k in 0..3 {
                let mut q = p;
                q[k] += 1e-6;
                grad[k] = (model(&q, u) - f) / 1e-6;
            }
            jtj += grad * grad.transpose();
            jtr += grad * (f - y);
        }
        let mut damped = jtj;
        for k in 0..3 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&-jtr) else {
            break;
        };
        let trial = p + step;
        let trial_cost = cost(&trial);
        if trial_cost.is_finite() && trial_cost < current {
            let converged = current - trial_cost < 1e-14 * current.max(1e-300);
            p = trial;
            current = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let deviation = grid
        .iter()
        .zip(&target)
        .map(|(&u, &y)| (model(&p, u) - y).abs())
        .fold(0.0, f64::max);
    if deviation > FIT_MAX_DEVIATION || model(&p, 0.0) > 0.01 || model(&p, 1.0) < 0.99 {
        return None;
    }
    Some(CdfKind::Logistic {
        growth: p[0].exp() / width,
        midpoint: lo + p[1] * width,
        nu: p[2].exp(),
    })
}

/// Smallest `v` in the support with `F(v) ≥ q`, by bisection to `1e-4` of the
/// support width (the upper end of the final bracket is returned).
pub fn quantile_inverse(cdf: &ReturnCdf, q: f64) -> f64 {
    let (mut lo, mut hi) = cdf.support;
    if q <= 0.0 || cdf.eval(lo) >= q {
        return lo;
    }
    if cdf.eval(hi) < q {
        return hi;
    }
    let tol = 1e-4 * (hi - lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if cdf.eval(mid) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Center of the densest of 100 bins after a 5-bin moving average; ties go to
/// the lower return. A flat density therefore reports the lowest bin.
pub fn mode_estimate(cdf: &ReturnCdf) -> f64 {
    let masses = cdf.bin_masses(MODE_BINS);
    let smoothed: Vec<f64> = (0..MODE_BINS)
        .map(|b| {
            let from = b.saturating_sub(MODE_SMOOTHING);
            let to = (b + MODE_SMOOTHING + 1).min(MODE_BINS);
            masses[from..to].iter().sum::<f64>() / (to - from) as f64
        })
        .collect();
    let mut best = 0;
    for (b, &m) in smoothed.iter().enumerate() {
        if m > smoothed[best] {
            best = b;
        }
    }
    let (lo, hi) = cdf.support;
    lo + (best as f64 + 0.5) * (hi - lo) / MODE_BINS as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cdf_of(sorted: Vec<f64>, support: (f64, f64)) -> ReturnCdf {
        let samples = sorted.len();
        ReturnCdf {
            agent: 0,
            kind: CdfKind::Empirical { sorted },
            support,
            samples,
        }
    }

    #[test]
    fn empirical_hits_zero_and_one_at_sample_extremes() {
        let cdf = cdf_of(vec![0.1, 0.2, 0.4, 0.9], (0.0, 1.0));
        assert_eq!(cdf.eval(0.0), 0.0);
        assert_eq!(cdf.eval(0.1), 0.0);
        assert_eq!(cdf.eval(0.2), 1.5 / 4.0);
        assert_eq!(cdf.eval(0.9), 1.0);
        assert_eq!(cdf.eval(1.0), 1.0);
        assert!((cdf.eval(0.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_samples_do_not_divide_by_zero() {
        let cdf = cdf_of(vec![0.5, 0.5, 0.5], (0.0, 1.0));
        assert_eq!(cdf.eval(0.49), 0.0);
        assert_eq!(cdf.eval(0.5), 1.0);
    }

    #[test]
    fn quantile_inverse_endpoints() {
        let sorted: Vec<f64> = (0..1001).map(|k| k as f64 / 1000.0).collect();
        let cdf = cdf_of(sorted, (0.0, 1.0));
        assert_eq!(quantile_inverse(&cdf, 0.0), 0.0);
        assert!((quantile_inverse(&cdf, 0.5) - 0.5).abs() < 1e-3);
        assert_eq!(quantile_inverse(&cdf, 1.0), 1.0);
    }

    #[test]
    fn logistic_fit_recovers_a_logistic_sample() {
        // Deterministic quantiles of a known logistic on [0, 1].
        let (b, m, nu) = (12.0, 0.4, 1.5);
        let sorted: Vec<f64> = (1..20_000)
            .map(|k| {
                let q = k as f64 / 20_000.0;
                m - (q.powf(-1.0 / nu) - 1.0).ln() / b
            })
            .filter(|v| (0.0..=1.0).contains(v))
            .collect();
        let samples = sorted.len();
        let cloud = SampleCloud::from_points(1, 1, 0, super::super::WalkParams::for_dim(1, samples), sorted).unwrap();
        let cdf = estimate_cdf(&cloud, 0, &[1.0], (0.0, 1.0), CdfMethod::Logistic);
        let CdfKind::Logistic { growth, midpoint, nu: fitted } = cdf.kind else {
            panic!("fit rejected");
        };
        assert!((growth - b).abs() < 1.0 && (midpoint - m).abs() < 0.02 && (fitted - nu).abs() < 0.3);
    }

    #[test]
    fn logistic_fit_rejects_a_bimodal_sample() {
        let sorted: Vec<f64> = (0..2000).map(|k| if k < 1000 { 0.1 } else { 0.9 } + (k % 1000) as f64 * 1e-5).collect();
        let cloud = SampleCloud::from_points(1, 1, 0, super::super::WalkParams::for_dim(1, 2000), sorted).unwrap();
        let cdf = estimate_cdf(&cloud, 0, &[1.0], (0.0, 1.0), CdfMethod::Logistic);
        assert!(cdf.is_empirical());
    }

    #[test]
    fn mode_of_a_peaked_sample() {
        let sorted: Vec<f64> = (0..10_000).map(|k| 0.7 + 0.05 * ((k as f64 / 10_000.0) - 0.5)).collect();
        let cdf = cdf_of(sorted, (0.0, 1.0));
        assert!((mode_estimate(&cdf) - 0.7).abs() < 0.02);
    }
}
