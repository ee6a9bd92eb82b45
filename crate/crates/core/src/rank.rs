//! Pointwise numeric rank of bracket matrices and of the observability
//! codistribution.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{
    closed_loop_bracket_sequence, lie_derivative_gradients, standard_bracket_sequence,
};
use crate::error::{Error, Result};
use crate::gramian::with_jobs;
use crate::linalg::singular_values;
use crate::sampling::{fmt_f64, Region};
use crate::systems::SystemModel;

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RankMatrix {
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tol_used: f64,
}

impl RankMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let singular_values = singular_values(&matrix);
        let smax = singular_values.first().copied().unwrap_or(0.0);
        let tol_used = RANK_RTOL * smax;
        let rank = if smax == 0.0 {
            0
        } else {
            singular_values.iter().filter(|s| **s > tol_used).count()
        };
        RankMatrix {
            matrix,
            singular_values,
            rank,
            tol_used,
        }
    }

    /// `sigma_min / sigma_max` over the `min(rows, cols)` singular values.
    pub fn conditioning(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&max), Some(&min)) if max > 0.0 => min / max,
            _ => 0.0,
        }
    }
}

/// Default truncation depth `2n - 1`.
pub fn default_depth(n: usize) -> usize {
    (2 * n).saturating_sub(1).max(1)
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::Invalid("depth must be at least 1".into()));
    }
    Ok(())
}

fn columns_matrix(n: usize, levels: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
    let cols: Vec<&Vec<f64>> = levels.iter().flatten().collect();
    DMatrix::from_fn(n, cols.len(), |a, c| cols[c][a])
}

/// Columns `[g_j, ad g_j, ..., ad^depth g_j]` with the closed-loop bracket.
pub fn ctrl_bracket_matrix(sys: &SystemModel, x: &[f64], depth: usize) -> Result<RankMatrix> {
    check_depth(depth)?;
    let levels = closed_loop_bracket_sequence(sys, x, depth)?;
    Ok(RankMatrix::new(columns_matrix(sys.n(), &levels)))
}

/// Columns `[g_j, ad_f g_j, ..., ad_f^depth g_j]` with the standard bracket.
pub fn strong_access_matrix(sys: &SystemModel, x: &[f64], depth: usize) -> Result<RankMatrix> {
    check_depth(depth)?;
    let levels = standard_bracket_sequence(sys, x, depth)?;
    Ok(RankMatrix::new(columns_matrix(sys.n(), &levels)))
}

/// Rows `d(L_f^i h_j)/dx`, `i = 0..=depth`.
pub fn obs_codistribution(sys: &SystemModel, x: &[f64], depth: usize) -> Result<RankMatrix> {
    check_depth(depth)?;
    let levels = lie_derivative_gradients(sys, x, depth)?;
    let rows: Vec<&Vec<f64>> = levels.iter().flatten().collect();
    let n = sys.n();
    Ok(RankMatrix::new(DMatrix::from_fn(rows.len(), n, |r, b| {
        rows[r][b]
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankKind {
    CtrlBracket,
    StrongAccess,
    ObsCodistribution,
}

impl RankKind {
    pub fn eval(self, sys: &SystemModel, x: &[f64], depth: usize) -> Result<RankMatrix> {
        match self {
            RankKind::CtrlBracket => ctrl_bracket_matrix(sys, x, depth),
            RankKind::StrongAccess => strong_access_matrix(sys, x, depth),
            RankKind::ObsCodistribution => obs_codistribution(sys, x, depth),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankPoint {
    pub x: Vec<f64>,
    pub rank: usize,
    pub conditioning: f64,
}

/// Rank at every grid point of a region.
pub fn rank_sweep(
    sys: &SystemModel,
    kind: RankKind,
    region: &Region,
    shape: &[usize],
    depth: usize,
    jobs: Option<usize>,
) -> Result<Vec<RankPoint>> {
    let grid = region.grid(shape)?;
    with_jobs(jobs, || {
        grid.par_iter()
            .map(|x| {
                let r = kind.eval(sys, x, depth)?;
                Ok(RankPoint {
                    x: x.clone(),
                    rank: r.rank,
                    conditioning: r.conditioning(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Columns `x1..xn,rank,sigma_min_over_max`.
pub fn rank_sweep_csv(points: &[RankPoint]) -> String {
    let n = points.first().map_or(0, |p| p.x.len());
    let mut out = String::new();
    for i in 1..=n {
        let _ = write!(out, "x{i},");
    }
    out.push_str("rank,sigma_min_over_max\n");
    for p in points {
        for v in &p.x {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        let _ = writeln!(out, "{},{}", p.rank, fmt_f64(p.conditioning));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{MatrixField, VectorField};
    use crate::systems::registry;

    #[test]
    fn example_bracket_matrix_at_origin() {
        let sys = registry("paper_sec5").unwrap();
        let r = ctrl_bracket_matrix(&sys, &[0.0, 0.0], 2).unwrap();
        let want = DMatrix::from_row_slice(2, 3, &[1.0, 1.5, 1.25, 1.0, 0.5, 0.25]);
        assert!((&r.matrix - want).norm() < 1e-14);
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn example_observability_matrix() {
        let sys = registry("paper_sec5").unwrap();
        let r = obs_codistribution(&sys, &[0.0, 0.0], 1).unwrap();
        assert_eq!(r.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, -1.0]));
        assert_eq!(r.rank, 2);
        let r = obs_codistribution(&sys, &[-1.0, 0.3], 1).unwrap();
        assert_eq!(r.matrix[(1, 1)], 0.0);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn linear_strong_access_is_kalman() {
        let sys = registry("linear_2x2").unwrap();
        let r = strong_access_matrix(&sys, &[0.3, 0.3], 1).unwrap();
        // [B, -AB]
        assert_eq!(r.matrix, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 3.0]));
        assert_eq!(r.rank, 2);
        let sys = registry("linear_scalar").unwrap();
        assert_eq!(strong_access_matrix(&sys, &[0.0], 1).unwrap().rank, 1);
    }

    #[test]
    fn degenerate_systems() {
        let f = VectorField::parse(2, &["-x1", "-x2"]).unwrap();
        let g = MatrixField::parse(2, 2, 1, &["0", "0"]).unwrap();
        let h = VectorField::parse(2, &["0"]).unwrap();
        let k = VectorField::parse(2, &["x1"]).unwrap();
        let sys = SystemModel::new("zero", f, g, h, Some(k)).unwrap();
        assert_eq!(ctrl_bracket_matrix(&sys, &[0.1, 0.2], 3).unwrap().rank, 0);
        assert_eq!(obs_codistribution(&sys, &[0.1, 0.2], 3).unwrap().rank, 0);

        let f = VectorField::parse(2, &["0", "0"]).unwrap();
        let g = MatrixField::parse(2, 2, 1, &["1", "2"]).unwrap();
        let h = VectorField::parse(2, &["x1"]).unwrap();
        let sys = SystemModel::new("drift_free", f, g, h, None).unwrap();
        assert_eq!(strong_access_matrix(&sys, &[0.5, 0.5], 3).unwrap().rank, 1);
    }

    #[test]
    fn sweep_csv_layout() {
        let sys = registry("paper_sec5").unwrap();
        let pts = rank_sweep(
            &sys,
            RankKind::ObsCodistribution,
            &Region::parse("-1,-1,0,1").unwrap(),
            &[1, 3],
            1,
            Some(1),
        )
        .unwrap();
        assert!(pts.iter().all(|p| p.rank == 1));
        let csv = rank_sweep_csv(&pts);
        assert!(csv.starts_with("x1,x2,rank,sigma_min_over_max\n"));
    }

    #[test]
    fn depth_zero_rejected() {
        let sys = registry("paper_sec5").unwrap();
        assert!(ctrl_bracket_matrix(&sys, &[0.0, 0.0], 0).is_err());
        assert_eq!(default_depth(2), 3);
    }
}
