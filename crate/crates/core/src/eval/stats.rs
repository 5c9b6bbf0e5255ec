//! Summary statistics and t-tests over repeated-run metric samples.

/// Mean and sample (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom. `None` when a sample has fewer than two values or the combined
/// variance is zero.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let va = sa * sa / a.len() as f64;
    let vb = sb * sb / b.len() as f64;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Some(TTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// Paired t-test on matched samples (e.g. the same seeds).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, s) = mean_std(&d);
    if s <= 0.0 {
        return None;
    }
    let df = (d.len() - 1) as f64;
    let t = m / (s / (d.len() as f64).sqrt());
    Some(TTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom, as the
/// regularized incomplete beta `I_x(df/2, 1/2)` at `x = df / (df + t^2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    if x >= 1.0 {
        return 1.0;
    }
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_textbook() {
        assert_eq!(mean_std(&[1.0, 2.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_std(&[0.7; 5]).1, 0.0);
    }

    #[test]
    fn identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn shifted_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - 0.346_593_4).abs() < 1e-6, "{}", r.p);
        assert!(!r.significant(SIGNIFICANCE));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t_test(&[1.0, 1.0], &[1.0, 1.0]).is_none());
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_none());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn paired_matches_one_sample_on_differences() {
        let r = paired_t_test(&[1.0, 2.5, 3.0, 4.2], &[0.5, 2.0, 3.1, 3.0]).unwrap();
        assert_eq!(r.df, 3.0);
        assert!(r.t > 0.0 && r.p > 0.0 && r.p < 1.0);
    }
}
