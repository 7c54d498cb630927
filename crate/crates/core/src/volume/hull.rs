use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{sparse, Cmp, LpOutcome, Model, Sense};
use crate::momdp::dot;
use crate::polytope::{Equality, OccupancyPolytope};

/// Eigenvalues of `EᵀE` below this fraction of the largest span the null space.
const RANK_TOL: f64 = 1e-10;
/// Interior radius at or below which the polytope is treated as flat.
const FLAT_RADIUS: f64 = 1e-10;

/// Parametrization `x = origin + B y` of the polytope's affine hull.
#[derive(Debug, Clone, PartialEq)]
pub struct HullChart {
    basis: DMatrix<f64>,
    origin: Vec<f64>,
    /// Interior radius of `origin` in the hull metric.
    radius: f64,
}

impl HullChart {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Orthonormal columns spanning the hull directions.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `Bᵀ a`: the row `a` expressed in intrinsic coordinates.
    pub fn pull_back(&self, a: &[f64]) -> Vec<f64> {
        self.basis
            .column_iter()
            .map(|col| dot(col.as_slice(), a))
            .collect()
    }

    /// `origin + B y`.
    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.origin.clone();
        for (col, &c) in self.basis.column_iter().zip(y) {
            for (xi, bi) in x.iter_mut().zip(col.iter()) {
                *xi += c * bi;
            }
        }
        x
    }

    /// Orthogonal projection of `x` onto the hull.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.embed(&self.pull_back(&shifted))
    }
}

fn null_space(eq: &[Equality], n: usize) -> DMatrix<f64> {
    if eq.is_empty() {
        return DMatrix::identity(n, n);
    }
    let e = DMatrix::from_fn(eq.len(), n, |r, c| eq[r].coeffs[c]);
    let gram = e.transpose() * &e;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cols: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= RANK_TOL * top.max(1.0))
        .collect();
    // Fixed column order keeps the chart reproducible.
    cols.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // Sign convention: first non-negligible entry positive.
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        basis.set_column(j, &v);
    }
    basis
}

/// Max-radius interior point: `max s` with `a_k·x + s‖Bᵀa_k‖ ≤ b_k`, `s ≤ 1`.
fn chebyshev(poly: &OccupancyPolytope, eq: &[Equality], basis: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let n = poly.num_vars();
    let mut model = Model {
        sense: Sense::Maximize,
        num_d: n,
        obj: vec![0.0; n],
        bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        rows: Vec::new(),
    };
    let s = model.add_var(1.0, (0.0, 1.0));
    for h in poly.ineq() {
        let norm = row_norm(basis, &h.coeffs);
        let mut terms = sparse(&h.coeffs);
        if norm > 1e-12 {
            terms.push((s, norm));
        }
        model.add_row(terms, Cmp::Le, h.bound);
    }
    for e in eq {
        model.add_row(sparse(&e.coeffs), Cmp::Eq, e.value);
    }
    match model.solve()? {
        LpOutcome::Optimal { x, .. } => Ok((x[..n].to_vec(), x[s])),
        LpOutcome::Infeasible => Err(Error::InfeasibleModel),
        LpOutcome::Limit => Err(Error::IterationLimit),
    }
}

fn row_norm(basis: &DMatrix<f64>, a: &[f64]) -> f64 {
    basis
        .column_iter()
        .map(|col| dot(col.as_slice(), a).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Inequality rows that hold with equality on the whole polytope.
fn implicit_equalities(poly: &OccupancyPolytope) -> Result<Vec<Equality>> {
    let mut found = Vec::new();
    for h in poly.ineq() {
        let mut model = Model::over(poly, Sense::Minimize);
        model.set_d_objective(&h.coeffs);
        let least = match model.solve()? {
            LpOutcome::Optimal { objective, .. } => objective,
            LpOutcome::Infeasible => return Err(Error::InfeasibleModel),
            LpOutcome::Limit => return Err(Error::IterationLimit),
        };
        if h.bound - least <= FLAT_RADIUS {
            found.push(Equality {
                coeffs: h.coeffs.clone(),
                value: h.bound,
            });
        }
    }
    Ok(found)
}

/// Removes the equality residual of `x` by a minimum-norm correction.
fn polish(x: &mut [f64], eq: &[Equality]) {
    if eq.is_empty() {
        return;
    }
    let n = x.len();
    let e = DMatrix::from_fn(eq.len(), n, |r, c| eq[r].coeffs[c]);
    let residual = DVector::from_iterator(eq.len(), eq.iter().map(|row| dot(&row.coeffs, x) - row.value));
    if let Ok(pinv) = e.pseudo_inverse(1e-12) {
        let delta = pinv * residual;
        for (xi, d) in x.iter_mut().zip(delta.iter()) {
            *xi -= d;
        }
    }
}

/// Orthonormal chart of the affine hull with a strictly interior origin.
///
/// Inequality rows that are tight everywhere are detected and folded into the
/// equality system once; a polytope still flat after that is degenerate.
pub fn affine_hull(poly: &OccupancyPolytope) -> Result<HullChart> {
    let n = poly.num_vars();
    let mut eq: Vec<Equality> = poly.eq().to_vec();
    let mut basis = null_space(&eq, n);
    let (mut origin, mut radius) = chebyshev(poly, &eq, &basis)?;
    if radius <= FLAT_RADIUS && basis.ncols() > 0 {
        eq.extend(implicit_equalities(poly)?);
        basis = null_space(&eq, n);
        let retry = chebyshev(poly, &eq, &basis)?;
        origin = retry.0;
        radius = retry.1;
        if radius <= FLAT_RADIUS && basis.ncols() > 0 {
            return Err(Error::DegeneratePolytope(format!(
                "interior radius {radius:e} after folding implicit equalities"
            )));
        }
    }
    polish(&mut origin, &eq);
    Ok(HullChart { basis, origin, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::polytope::{build_polytope, Halfspace};
    use crate::{Criterion, Momdp};

    fn assert_orthonormal(b: &DMatrix<f64>) {
        let g = b.transpose() * b;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn simplex_chart() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        assert_eq!(chart.dim(), 2);
        assert_orthonormal(chart.basis());
        for v in chart.origin() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_cycle_is_a_point() {
        let m = Momdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![vec![0.0; 2]], Criterion::Average).unwrap();
        let chart = affine_hull(&build_polytope(&m).unwrap()).unwrap();
        assert_eq!(chart.dim(), 0);
        assert!((chart.origin()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fully_connected_two_by_two() {
        let m = instances::fully_connected(2, 2, vec![vec![0.0; 4]], Criterion::Average).unwrap();
        let poly = build_polytope(&m).unwrap();
        let chart = affine_hull(&poly).unwrap();
        assert_eq!(chart.dim(), 2);
        assert_orthonormal(chart.basis());
        for y in [[0.1, -0.2], [0.3, 0.05]] {
            let x = chart.embed(&y);
            for e in poly.eq() {
                assert!((dot(&e.coeffs, &x) - e.value).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn implicit_equalities_are_folded() {
        // x0 + x1 = 1, x ≥ 0, and x1 ≤ 0 forces x1 = 0 without saying so.
        let rows = vec![
            Halfspace::new(vec![-1.0, 0.0, 0.0], 0.0),
            Halfspace::new(vec![0.0, -1.0, 0.0], 0.0),
            Halfspace::new(vec![0.0, 0.0, -1.0], 0.0),
            Halfspace::new(vec![0.0, 1.0, 0.0], 0.0),
        ];
        let eq = vec![Equality { coeffs: vec![1.0, 1.0, 1.0], value: 1.0 }];
        let poly = OccupancyPolytope::from_rows(1, 3, rows, eq).unwrap();
        let chart = affine_hull(&poly).unwrap();
        assert_eq!(chart.dim(), 1);
        assert!(chart.origin()[1].abs() < 1e-9);
        assert!(chart.radius() > 0.1);
    }
}
