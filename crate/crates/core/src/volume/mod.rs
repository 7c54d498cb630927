//! Monte Carlo volume oracle over the occupancy polytope.
//!
//! The polytope has zero volume in its ambient space (the flow equalities cut
//! it down), so sampling happens in intrinsic coordinates of its affine hull.

mod cdf;
mod hull;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use cdf::{estimate_cdf, mode_estimate, quantile_inverse, CdfKind, CdfMethod, ReturnCdf};
pub use hull::{affine_hull, HullChart};

use crate::error::{Error, Result};
use crate::momdp::{dot, OccupancyMeasure};
use crate::polytope::{Halfspace, OccupancyPolytope};

/// Default number of independent walks a cloud is split into.
pub const DEFAULT_SHARDS: usize = 8;

/// Slacks are recomputed from scratch this often to stop drift.
const RESYNC_EVERY: usize = 1000;

/// Rows whose direction rates all fall below this are constant on the hull.
const FLAT_ROW: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkParams {
    pub count: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub shards: usize,
}

impl WalkParams {
    /// Burn-in of `1000·dim` steps and thinning by `dim`.
    pub fn for_dim(dim: usize, count: usize) -> Self {
        WalkParams {
            count,
            burn_in: 1000 * dim.max(1),
            thinning: dim.max(1),
            shards: DEFAULT_SHARDS,
        }
    }
}

/// How shards are scheduled; results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Runs shards on the rayon pool when the `parallel` feature is enabled.
    Parallel,
}

/// Points drawn (approximately) uniformly from a polytope, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCloud {
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    pub walk_params: WalkParams,
    /// Set when the polytope is a single point; the cloud then holds it once.
    pub degenerate: bool,
    values: Vec<f64>,
}

impl SampleCloud {
    pub fn from_points(
        num_states: usize,
        num_actions: usize,
        seed: u64,
        walk_params: WalkParams,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = num_states * num_actions;
        if n == 0 || !values.len().is_multiple_of(n) {
            return Err(Error::InvalidModel("cloud values are not a whole number of points".into()));
        }
        Ok(SampleCloud {
            num_states,
            num_actions,
            seed,
            walk_params,
            degenerate: false,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim())
    }

    pub fn measure(&self, k: usize) -> OccupancyMeasure {
        OccupancyMeasure::new(self.num_states, self.num_actions, self.point(k).to_vec())
    }

    /// `⟨x, r⟩` for every point, in cloud order.
    pub fn returns(&self, r: &[f64]) -> Vec<f64> {
        self.points().map(|x| dot(x, r)).collect()
    }

    /// Writes the cloud as CSV: one metadata comment line, a header of
    /// `d_<s>_<a>` columns in row-major `(s, a)` order, then one row per point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let p = &self.walk_params;
        writeln!(
            out,
            "# seed={} count={} burn_in={} thinning={} shards={} degenerate={}",
            self.seed, p.count, p.burn_in, p.thinning, p.shards, self.degenerate
        )?;
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| format!("d_{s}_{a}")))
            .collect();
        w.write_record(&header)?;
        for x in self.points() {
            w.write_record(x.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut meta = String::new();
        reader.read_line(&mut meta)?;
        let field = |key: &str| -> Result<&str> {
            meta.trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("cloud metadata lacks `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            field(key)?.parse().map_err(|_| Error::Parse(format!("bad `{key}` in cloud metadata")))
        };
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| Error::Parse("bad `seed` in cloud metadata".into()))?;
        let walk_params = WalkParams {
            count: num("count")?,
            burn_in: num("burn_in")?,
            thinning: num("thinning")?,
            shards: num("shards")?,
        };
        let degenerate = field("degenerate")? == "true";
        let mut csv = csv::Reader::from_reader(reader);
        let mut num_states = 0;
        let mut num_actions = 0;
        for name in csv.headers()? {
            let parse = |t: Option<&str>| t.and_then(|v| v.parse::<usize>().ok());
            let mut parts = name.strip_prefix("d_").unwrap_or_default().split('_');
            match (parse(parts.next()), parse(parts.next())) {
                (Some(s), Some(a)) => {
                    num_states = num_states.max(s + 1);
                    num_actions = num_actions.max(a + 1);
                }
                _ => return Err(Error::Parse(format!("bad cloud column `{name}`"))),
            }
        }
        let mut values = Vec::new();
        for record in csv.records() {
            for v in record?.iter() {
                values.push(v.parse::<f64>().map_err(|_| Error::Parse(format!("bad cloud value `{v}`")))?);
            }
        }
        let mut cloud = SampleCloud::from_points(num_states, num_actions, seed, walk_params, values)?;
        cloud.degenerate = degenerate;
        Ok(cloud)
    }
}

/// A Monte Carlo fraction with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    pub std_error: f64,
}

/// Draws `n` points with default walk parameters.
pub fn sample_uniform(poly: &OccupancyPolytope, chart: &HullChart, n: usize, seed: u64) -> Result<SampleCloud> {
    sample_with(poly, chart, WalkParams::for_dim(chart.dim(), n), seed, Execution::Parallel)
}

/// Hit-and-run over the affine hull, split into independently seeded shards.
pub fn sample_with(
    poly: &OccupancyPolytope,
    chart: &HullChart,
    params: WalkParams,
    seed: u64,
    exec: Execution,
) -> Result<SampleCloud> {
    if params.count == 0 || params.shards == 0 || params.thinning == 0 {
        return Err(Error::InvalidModel("walk needs positive count, shards and thinning".into()));
    }
    let (ns, na) = (poly.num_states(), poly.num_actions());
    if chart.dim() == 0 {
        log::warn!("polytope is a single point; returning it instead of sampling");
        let mut cloud = SampleCloud::from_points(ns, na, seed, params, chart.origin().to_vec())?;
        cloud.degenerate = true;
        return Ok(cloud);
    }
    let walk = Walk::new(poly, chart);
    let shards: Vec<usize> = (0..params.shards).collect();
    let run = |&k: &usize| {
        let quota = params.count / params.shards + usize::from(k < params.count % params.shards);
        walk.run(quota, &params, shard_seed(seed, k))
    };
    let parts: Vec<Vec<f64>> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            shards.par_iter().map(run).collect()
        }
        _ => shards.iter().map(run).collect(),
    };
    SampleCloud::from_points(ns, na, seed, params, parts.concat())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn shard_seed(seed: u64, shard: usize) -> u64 {
    splitmix64(seed ^ splitmix64(shard as u64 + 1))
}

/// Precomputed walk data in intrinsic coordinates `x = origin + B y`.
struct Walk<'c> {
    chart: &'c HullChart,
    dim: usize,
    /// Rows of `A B` (row-major), one per non-flat inequality.
    rates: Vec<f64>,
    /// Slack of each kept row at the origin.
    base_slack: Vec<f64>,
}

impl<'c> Walk<'c> {
    fn new(poly: &OccupancyPolytope, chart: &'c HullChart) -> Self {
        let dim = chart.dim();
        let mut rates = Vec::new();
        let mut base_slack = Vec::new();
        for h in poly.ineq() {
            let row = chart.pull_back(&h.coeffs);
            if row.iter().any(|v| v.abs() > FLAT_ROW) {
                rates.extend_from_slice(&row);
                base_slack.push(h.slack(chart.origin()).max(0.0));
            }
        }
        Walk {
            chart,
            dim,
            rates,
            base_slack,
        }
    }

    fn resync(&self, y: &[f64], slack: &mut [f64]) {
        for ((s, base), row) in slack.iter_mut().zip(&self.base_slack).zip(self.rates.chunks_exact(self.dim)) {
            *s = (base - dot(row, y)).max(0.0);
        }
    }

    fn step(&self, rng: &mut ChaCha8Rng, y: &mut [f64], z: &mut [f64], rate: &mut [f64], slack: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for ((r, row), &s) in rate.iter_mut().zip(self.rates.chunks_exact(self.dim)).zip(slack.iter()) {
            *r = dot(row, z);
            if *r > 0.0 {
                hi = hi.min(s / *r);
            } else if *r < 0.0 {
                lo = lo.max(s / *r);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return;
        }
        let t = lo + (hi - lo) * rng.random::<f64>();
        for (yi, zi) in y.iter_mut().zip(z.iter()) {
            *yi += t * zi;
        }
        for (s, r) in slack.iter_mut().zip(rate.iter()) {
            *s = (*s - t * r).max(0.0);
        }
    }

    fn run(&self, quota: usize, params: &WalkParams, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = self.base_slack.len();
        let mut y = vec![0.0; self.dim];
        let mut z = vec![0.0; self.dim];
        let mut rate = vec![0.0; rows];
        let mut slack = self.base_slack.clone();
        let mut out = Vec::with_capacity(quota * self.chart.ambient_dim());
        let mut steps = 0usize;
        let mut advance = |y: &mut Vec<f64>, slack: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
            self.step(rng, y, &mut z, &mut rate, slack);
            steps += 1;
            if steps.is_multiple_of(RESYNC_EVERY) {
                self.resync(y, slack);
            }
        };
        for _ in 0..params.burn_in {
            advance(&mut y, &mut slack, &mut rng);
        }
        for _ in 0..quota {
            for _ in 0..params.thinning {
                advance(&mut y, &mut slack, &mut rng);
            }
            out.extend(self.chart.embed(&y));
        }
        out
    }
}

/// Fraction of cloud points satisfying `h`, with a batch-means standard error.
pub fn vol_fraction(cloud: &SampleCloud, h: &Halfspace) -> Fraction {
    fraction_where(cloud, |x| h.contains(x, 0.0))
}

/// Fraction of cloud points satisfying `pred`.
pub fn fraction_where(cloud: &SampleCloud, pred: impl Fn(&[f64]) -> bool) -> Fraction {
    let hits: Vec<bool> = cloud.points().map(pred).collect();
    fraction_of(&hits)
}

/// Mean of `hits` with the larger of the iid and 32-batch-means standard
/// errors, so correlation along each walk is not ignored.
pub fn fraction_of(hits: &[bool]) -> Fraction {
    const BATCHES: usize = 32;
    let n = hits.len();
    if n == 0 {
        return Fraction { value: 0.0, std_error: 0.0 };
    }
    let p = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    let iid = (p * (1.0 - p) / n as f64).sqrt();
    if n < 2 * BATCHES {
        return Fraction { value: p, std_error: iid };
    }
    let size = n / BATCHES;
    let means: Vec<f64> = hits
        .chunks(size)
        .take(BATCHES)
        .map(|c| c.iter().filter(|&&h| h).count() as f64 / c.len() as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Fraction {
        value: p,
        std_error: iid.max((var / BATCHES as f64).sqrt()),
    }
}

/// Sample mean projected onto the affine hull.
pub fn centroid_estimate(cloud: &SampleCloud, chart: &HullChart) -> OccupancyMeasure {
    let n = cloud.dim();
    let mut mean = vec![0.0; n];
    for x in cloud.points() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    let count = cloud.len().max(1) as f64;
    for m in &mut mean {
        *m /= count;
    }
    OccupancyMeasure::new(cloud.num_states, cloud.num_actions, chart.project(&mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::polytope::{build_polytope, Equality};

    fn unit_square() -> OccupancyPolytope {
        let rows = vec![
            Halfspace::new(vec![-1.0, 0.0], 0.0),
            Halfspace::new(vec![0.0, -1.0], 0.0),
            Halfspace::new(vec![1.0, 0.0], 1.0),
            Halfspace::new(vec![0.0, 1.0], 1.0),
        ];
        OccupancyPolytope::from_rows(1, 2, rows, Vec::<Equality>::new()).unwrap()
    }

    #[test]
    fn unit_square_mean_is_center() {
        let poly = unit_square();
        let chart = affine_hull(&poly).unwrap();
        let cloud = sample_uniform(&poly, &chart, 100_000, 7).unwrap();
        assert_eq!(cloud.len(), 100_000);
        let c = centroid_estimate(&cloud, &chart);
        assert!((c.values[0] - 0.5).abs() < 0.01 && (c.values[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn segment_fraction_is_linear() {
        let m = instances::gen_simplex_instance(2).unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        let cloud = sample_uniform(&poly, &chart, 100_000, 1).unwrap();
        let f = vol_fraction(&cloud, &Halfspace::at_most(&[1.0, 0.0], 0.3));
        assert!((f.value - 0.3).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn simplex_corner_fraction() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        let cloud = sample_uniform(&poly, &chart, 100_000, 3).unwrap();
        let upper = vol_fraction(&cloud, &Halfspace::at_least(m.reward(0), 1.0 / 3.0));
        assert!((upper.value - 4.0 / 9.0).abs() < 0.01, "{upper:?}");
        let lower = vol_fraction(&cloud, &Halfspace::at_most(m.reward(0), 1.0 / 3.0));
        assert!((lower.value - 5.0 / 9.0).abs() < 0.01, "{lower:?}");
        assert_eq!(vol_fraction(&cloud, &Halfspace::at_most(m.reward(0), 1.5)).value, 1.0);
        assert_eq!(vol_fraction(&cloud, &Halfspace::at_least(m.reward(0), 1.5)).value, 0.0);
        let c = centroid_estimate(&cloud, &chart);
        for v in &c.values {
            assert!((v - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn every_point_is_feasible_and_reproducible() {
        let m = instances::warehouse_fixture();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        let a = sample_uniform(&poly, &chart, 500, 11).unwrap();
        let b = sample_with(&poly, &chart, WalkParams::for_dim(chart.dim(), 500), 11, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.points().all(|x| poly.contains_point(x, 1e-7)));
        let c = sample_uniform(&poly, &chart, 500, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_point_polytope_is_returned_once() {
        let m = crate::Momdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![vec![1.0, 0.0]], crate::Criterion::Average)
            .unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        let cloud = sample_uniform(&poly, &chart, 10, 0).unwrap();
        assert!(cloud.degenerate);
        assert_eq!(cloud.len(), 1);
        assert!((cloud.point(0)[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        let cloud = sample_uniform(&poly, &chart, 200, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        cloud.write_csv(&path).unwrap();
        assert_eq!(SampleCloud::read_csv(&path).unwrap(), cloud);
    }

    #[test]
    fn batch_means_error_is_not_below_iid() {
        let hits: Vec<bool> = (0..6400).map(|k| (k / 100) % 2 == 0).collect();
        let f = fraction_of(&hits);
        assert_eq!(f.value, 0.5);
        assert!(f.std_error >= (0.25f64 / 6400.0).sqrt());
    }
}
