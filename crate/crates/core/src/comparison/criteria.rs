use serde::{Deserialize, Serialize};

use super::check_draws;
use crate::data::{ApcTable, Matrix};
use crate::error::{ApcError, Result};
use crate::model::{ApcPosterior, ModelSpec};
use crate::sampler::PosteriorDraws;

/// Posterior mean over draws of each cell's fitted rate (exp of the linear
/// predictor without the offset), as an A × T matrix.
pub fn fitted_rates(draws: &PosteriorDraws, table: &ApcTable, spec: &ModelSpec) -> Result<Matrix> {
    let post = ApcPosterior::new(spec, table)?;
    check_draws(draws, &post)?;
    let n = post.n_cells();
    let mut sum = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for row in draws.rows() {
        post.rates_into(row, &mut buf)?;
        for (s, r) in sum.iter_mut().zip(&buf) {
            *s += r;
        }
    }
    let total = draws.n_draws() as f64;
    Matrix::from_row_major(table.n_age(), table.n_period(), sum.into_iter().map(|s| s / total).collect())
}

/// Residual sum of squares between fitted and observed rates.
pub fn rss(fitted: &Matrix, observed: &Matrix) -> Result<f64> {
    if fitted.rows() != observed.rows() || fitted.cols() != observed.cols() {
        return Err(ApcError::domain(format!(
            "fitted is {}x{} but observed is {}x{}",
            fitted.rows(),
            fitted.cols(),
            observed.rows(),
            observed.cols()
        )));
    }
    Ok(fitted
        .as_slice()
        .iter()
        .zip(observed.as_slice())
        .map(|(f, o)| (o - f) * (o - f))
        .sum())
}

/// Shares of the residual sum of squares removed by adding effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssShares {
    pub apc2: f64,
    pub ap2: f64,
    pub ac2: f64,
    pub a2: f64,
    /// Cohort effects in the APC model, (AP² − APC²)/AP².
    pub c_apc: f64,
    /// Period effects in the APC model, (AC² − APC²)/AC².
    pub p_apc: f64,
    /// Period and cohort effects together, (A² − APC²)/A².
    pub pc_apc: f64,
    pub p_ap: f64,
    pub c_ac: f64,
    /// Negative shares (a larger model fitting worse) are kept as-is and noted here.
    pub warnings: Vec<String>,
}

pub fn rss_shares(apc2: f64, ap2: f64, ac2: f64, a2: f64) -> Result<RssShares> {
    for (name, v) in [("APC", apc2), ("AP", ap2), ("AC", ac2), ("A", a2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(ApcError::domain(format!("RSS of {name} must be a nonnegative number, got {v}")));
        }
    }
    for (name, v) in [("AP", ap2), ("AC", ac2), ("A", a2)] {
        if v == 0.0 {
            return Err(ApcError::domain(format!("RSS of {name} is zero, so shares relative to it are undefined")));
        }
    }
    let share = |reduced: f64, full: f64| (reduced - full) / reduced;
    let mut out = RssShares {
        apc2,
        ap2,
        ac2,
        a2,
        c_apc: share(ap2, apc2),
        p_apc: share(ac2, apc2),
        pc_apc: share(a2, apc2),
        p_ap: share(a2, ap2),
        c_ac: share(a2, ac2),
        warnings: Vec::new(),
    };
    for (name, v) in [
        ("C_APC", out.c_apc),
        ("P_APC", out.p_apc),
        ("PC_APC", out.pc_apc),
        ("P_AP", out.p_ap),
        ("C_AC", out.c_ac),
    ] {
        if v < 0.0 {
            out.warnings.push(format!(
                "{name} = {v:.4} is negative: the larger model has the larger residual sum of squares"
            ));
        }
    }
    Ok(out)
}

/// Area under |f| for the piecewise-linear interpolant of `values` on a unit
/// grid. Segments that cross zero are split at the crossing.
pub fn effect_area(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(ApcError::domain(format!(
            "effect area needs at least 2 levels, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(ApcError::domain(format!("effect value {v} is not finite")));
    }
    Ok(values
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a * b >= 0.0 {
                (a.abs() + b.abs()) / 2.0
            } else {
                // triangles on either side of the root at a / (a - b)
                (a * a + b * b) / (2.0 * (a.abs() + b.abs()))
            }
        })
        .sum())
}

/// Area of the reduced model's effect over the full model's, for one block.
pub fn area_share(full: &[f64], reduced: &[f64]) -> Result<f64> {
    if full.len() != reduced.len() {
        return Err(ApcError::domain(format!(
            "effect vectors have {} and {} levels",
            full.len(),
            reduced.len()
        )));
    }
    let full_area = effect_area(full)?;
    if full_area == 0.0 {
        return Err(ApcError::domain("full-model effect area is zero"));
    }
    // 1 − (full − reduced)/full, written so identical inputs give exactly 1
    Ok(effect_area(reduced)? / full_area)
}

/// (P_eff, C_eff): period area AP/APC and cohort area AC/APC.
pub fn effect_shares(
    apc_period: &[f64],
    ap_period: &[f64],
    apc_cohort: &[f64],
    ac_cohort: &[f64],
) -> Result<(f64, f64)> {
    Ok((area_share(apc_period, ap_period)?, area_share(apc_cohort, ac_cohort)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rss_examples() {
        let m = Matrix::from_row_major(1, 1, vec![0.05]).unwrap();
        let f = Matrix::from_row_major(1, 1, vec![0.03]).unwrap();
        assert!((rss(&f, &m).unwrap() - 4e-4).abs() < 1e-18);
        assert_eq!(rss(&m, &m).unwrap(), 0.0);
        assert!(rss(&Matrix::zeros(2, 2), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn share_examples() {
        let s = rss_shares(2.0, 2.0, 3.0, 5.0).unwrap();
        assert_eq!(s.c_apc, 0.0);
        let s = rss_shares(0.0, 1.0, 2.0, 3.0).unwrap();
        assert_eq!((s.c_apc, s.p_apc, s.pc_apc), (1.0, 1.0, 1.0));
        assert!(s.warnings.is_empty());
        assert!(rss_shares(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(rss_shares(-1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn negative_shares_not_clamped() {
        let s = rss_shares(3.0, 2.0, 4.0, 5.0).unwrap();
        assert_eq!(s.c_apc, -0.5);
        assert_eq!(s.warnings.len(), 1);
        assert!(s.warnings[0].starts_with("C_APC"));
    }

    #[test]
    fn area_examples() {
        assert_eq!(effect_area(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(effect_area(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(effect_area(&[-1.0, 1.0]).unwrap(), 0.5);
        // triangle of height 2 and base 2, and a trapezoid on the other side
        assert!((effect_area(&[2.0, 0.0, -1.0, -3.0]).unwrap() - (1.0 + 0.5 + 2.0)).abs() < 1e-15);
        // root at 0.25: triangles 0.5*0.25*1 and 0.5*0.75*3
        assert!((effect_area(&[1.0, -3.0]).unwrap() - (0.125 + 1.125)).abs() < 1e-15);
        assert!(effect_area(&[1.0]).is_err());
    }

    #[test]
    fn effect_share_examples() {
        let v = [0.3, -0.1, -0.4, 0.2];
        assert_eq!(effect_shares(&v, &v, &v, &v).unwrap(), (1.0, 1.0));
        let half: Vec<f64> = v.iter().map(|x| x / 2.0).collect();
        let (p, _) = effect_shares(&v, &half, &v, &v).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(effect_shares(&[0.0, 0.0], &[1.0, 1.0], &v, &v).is_err());
        assert!(effect_shares(&v, &v[..3], &v, &v).is_err());
    }

    proptest! {
        #[test]
        fn area_is_positively_homogeneous(
            v in proptest::collection::vec(-5.0f64..5.0, 2..12),
            c in -10.0f64..10.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let lhs = effect_area(&scaled).unwrap();
            let rhs = c.abs() * effect_area(&v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn effect_shares_scale_invariant(
            full in proptest::collection::vec(-5.0f64..5.0, 3..10),
            k in 0.01f64..100.0,
            c in 0.1f64..3.0,
        ) {
            prop_assume!(effect_area(&full).unwrap() > 1e-6);
            let reduced: Vec<f64> = full.iter().map(|x| c * x - 0.1).collect();
            let (p1, _) = effect_shares(&full, &reduced, &full, &full).unwrap();
            let fs: Vec<f64> = full.iter().map(|x| k * x).collect();
            let rs: Vec<f64> = reduced.iter().map(|x| k * x).collect();
            let (p2, _) = effect_shares(&fs, &rs, &full, &full).unwrap();
            prop_assert!((p1 - p2).abs() <= 1e-10 * p1.abs().max(1.0));
        }
    }
}
