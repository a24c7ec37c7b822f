//! One-way repeated-measures ANOVA (sphericity assumed, no correction).

use serde::Serialize;

use super::special::f_upper_tail;
use super::AnalysisError;

/// Sums of squares below this fraction of the total are treated as zero.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Residual variance vanishes while conditions differ: F is infinite, p = 0.
    ZeroErrorVariance,
    /// Conditions do not differ at all: F = 0, p = 1.
    NoConditionVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub n_subjects: usize,
    pub k_conditions: usize,
    pub grand_mean: f64,
    pub condition_means: Vec<f64>,
    pub subject_means: Vec<f64>,
    pub ss_condition: f64,
    pub ss_subject: f64,
    pub ss_error: f64,
    pub ss_total: f64,
    pub df_condition: usize,
    pub df_error: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub degenerate: Option<Degeneracy>,
}

impl AnovaResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `rows[i][j]` is subject `i` under condition `j`.
pub fn rm_anova<R: AsRef<[f64]>>(rows: &[R]) -> Result<AnovaResult, AnalysisError> {
    let n = rows.len();
    if n < 2 {
        return Err(AnalysisError::Shape(format!("need at least 2 subjects, got {n}")));
    }
    let k = rows[0].as_ref().len();
    if k < 2 {
        return Err(AnalysisError::Shape(format!("need at least 2 conditions, got {k}")));
    }
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != k {
            return Err(AnalysisError::Shape(format!("row {i} has {} cells, expected {k}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::Shape(format!("cell ({i}, {j}) is missing or not finite")));
        }
    }

    let (nf, kf) = (n as f64, k as f64);
    let grand = rows.iter().flat_map(|r| r.as_ref().iter()).sum::<f64>() / (nf * kf);
    let subject_means: Vec<f64> = rows.iter().map(|r| r.as_ref().iter().sum::<f64>() / kf).collect();
    let condition_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r.as_ref()[j]).sum::<f64>() / nf)
        .collect();

    let ss_condition = nf * condition_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_subject = kf * subject_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_total: f64 = rows
        .iter()
        .flat_map(|r| r.as_ref().iter())
        .map(|x| (x - grand).powi(2))
        .sum();
    let ss_error = (ss_total - ss_condition - ss_subject).max(0.0);

    let df_condition = k - 1;
    let df_error = (n - 1) * (k - 1);
    // Rounding in the means leaves residue proportional to the data's magnitude, not its spread.
    let magnitude = rows.iter().flat_map(|r| r.as_ref().iter()).map(|x| x * x).sum::<f64>();
    let floor = DEGENERATE_REL * ss_total.max(1e-3 * magnitude);

    let (f_stat, p_value, degenerate) = if ss_condition <= floor {
        (0.0, 1.0, Some(Degeneracy::NoConditionVariance))
    } else if ss_error <= floor {
        (f64::INFINITY, 0.0, Some(Degeneracy::ZeroErrorVariance))
    } else {
        let f = (ss_condition / df_condition as f64) / (ss_error / df_error as f64);
        (f, f_upper_tail(f, df_condition as f64, df_error as f64), None)
    };

    Ok(AnovaResult {
        n_subjects: n,
        k_conditions: k,
        grand_mean: grand,
        condition_means,
        subject_means,
        ss_condition,
        ss_subject,
        ss_error,
        ss_total,
        df_condition,
        df_error,
        f_stat,
        p_value,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fractional_data_is_flat() {
        let r = rm_anova(&vec![vec![4.2; 3]; 6]).unwrap();
        assert_eq!((r.f_stat, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_rows_give_zero_f() {
        let data = [[3.0, 3.0, 3.0], [5.0, 5.0, 5.0], [1.5, 1.5, 1.5]];
        let r = rm_anova(&data).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn all_constant_flagged() {
        let r = rm_anova(&[[2.0, 2.0], [2.0, 2.0]]).unwrap();
        assert_eq!((r.f_stat, r.p_value), (0.0, 1.0));
        assert_eq!(r.degenerate, Some(Degeneracy::NoConditionVariance));
    }

    #[test]
    fn zero_error_variance() {
        // purely additive subject + condition effects
        let r = rm_anova(&[[1.0, 2.0, 4.0], [3.0, 4.0, 6.0]]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.degenerate, Some(Degeneracy::ZeroErrorVariance));
    }

    #[test]
    fn shape_errors() {
        assert!(rm_anova(&[[1.0, 2.0]]).is_err());
        assert!(rm_anova(&[[1.0], [2.0]]).is_err());
        let ragged: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(rm_anova(&ragged).is_err());
        assert!(rm_anova(&[[1.0, f64::NAN], [1.0, 2.0]]).is_err());
    }

    #[test]
    fn dfs() {
        let r = rm_anova(&[[1.0, 2.0, 3.5], [2.0, 2.5, 3.0], [0.5, 2.0, 2.0], [1.0, 1.0, 4.0]]).unwrap();
        assert_eq!(r.df_condition, 2);
        assert_eq!(r.df_error, 6);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }
}
