//! Special functions behind the t-distribution p-values.

pub use statrs::function::beta::beta_reg as regularized_incomplete_beta;
pub use statrs::function::gamma::ln_gamma;

/// Two-tailed p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}
