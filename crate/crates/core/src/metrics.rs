//! Evaluation: NMSE in dB, normal-approximation confidence intervals, the
//! untied-vs-tied gain, defect profiles and the normalized 1-Wasserstein
//! distance between 1D profiles.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::blocksparse::MMVSignal;
use crate::error::{Error, Result};

/// `10 log10(||x* - x||_F^2 / ||x*||_F^2)`; `-inf` for an exact match.
pub fn nmse_db(estimate: &MMVSignal, truth: &MMVSignal) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dim("nmse", format!("{:?}", truth.shape()), format!("{:?}", estimate.shape())));
    }
    let reference = truth.frobenius_sq();
    if reference == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    let err: f64 = estimate.values().iter().zip(truth.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(10.0 * (err / reference).log10())
}

/// `NMSE_untied - NMSE_tied`; negative values mean untied is better.
pub fn untied_gain(nmse_untied: f64, nmse_tied: f64) -> f64 {
    nmse_untied - nmse_tied
}

/// Text form used in CSV and JSON outputs.
pub fn format_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Normal-approximation 95% confidence interval of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci95 {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl Ci95 {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

pub fn ci95(samples: &[f64]) -> Result<Ci95> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("confidence interval needs at least 2 samples, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    let half = 1.96 * var.sqrt() / (n as f64).sqrt();
    Ok(Ci95 {
        mean,
        lower: mean - half,
        upper: mean + half,
        n,
    })
}

/// Mean NMSE per iteration over a test set, with 95% bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseCurve {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub test_set_size: usize,
}

impl NmseCurve {
    /// Builds the curve from per-instance NMSE sequences of equal length.
    pub fn from_instances(curves: &[Vec<f64>]) -> Result<Self> {
        let len = curves.first().map(Vec::len).unwrap_or(0);
        if curves.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument("NMSE curves have different lengths".into()));
        }
        let mut out = NmseCurve {
            mean: Vec::with_capacity(len),
            lower: Vec::with_capacity(len),
            upper: Vec::with_capacity(len),
            test_set_size: curves.len(),
        };
        for i in 0..len {
            let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let ci = ci95(&column)?;
            out.mean.push(ci.mean);
            out.lower.push(ci.lower);
            out.upper.push(ci.upper);
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,mean_nmse_db,ci95_lower,ci95_upper\n");
        for i in 0..self.mean.len() {
            s.push_str(&format!(
                "{i},{},{},{}\n",
                format_db(self.mean[i]),
                format_db(self.lower[i]),
                format_db(self.upper[i])
            ));
        }
        s
    }
}

/// Sum over measurements per position, scaled so the largest magnitude is 1.
/// Negative excursions are kept.
pub fn defect_estimate(x: &MMVSignal) -> Array1<f64> {
    let sums: Array1<f64> = x.values().rows().into_iter().map(|r| r.sum()).collect();
    let peak = sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        sums
    } else {
        sums / peak
    }
}

/// Clamps negative entries to zero.
pub fn positive_part(v: &Array1<f64>) -> Array1<f64> {
    v.mapv(|x| x.max(0.0))
}

/// 1-Wasserstein distance between two nonnegative profiles on a common grid,
/// after normalizing each to unit mass and mapping positions onto `[0, 1]`.
pub fn wasserstein1(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim("wasserstein1", u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::InvalidArgument("wasserstein1 needs non-empty profiles".into()));
    }
    let mass = |p: &[f64]| -> Result<f64> {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument("wasserstein1 needs finite nonnegative profiles".into()));
        }
        let m: f64 = p.iter().sum();
        if m <= 0.0 {
            return Err(Error::InvalidArgument("wasserstein1 needs profiles with positive mass".into()));
        }
        Ok(m)
    };
    let (mu, mv) = (mass(u)?, mass(v)?);
    let n = u.len();
    if n == 1 {
        return Ok(0.0);
    }
    let (mut cu, mut cv, mut total) = (0.0, 0.0, 0.0);
    for k in 0..n - 1 {
        cu += u[k] / mu;
        cv += v[k] / mv;
        total += (cu - cv).abs();
    }
    Ok((total / (n - 1) as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn sig(a: Array2<f64>) -> MMVSignal {
        MMVSignal::new(a).unwrap()
    }

    #[test]
    fn nmse_reference_values() {
        let truth = sig(array![[1.0, 2.0], [0.0, -2.0]]);
        assert_eq!(nmse_db(&truth, &truth).unwrap(), f64::NEG_INFINITY);
        assert_eq!(nmse_db(&MMVSignal::zeros(2, 2), &truth).unwrap(), 0.0);
        // error energy a quarter of the reference
        let half = sig(truth.values() * 0.5);
        let expected = 10.0 * 0.25f64.log10();
        assert!((nmse_db(&half, &truth).unwrap() - expected).abs() < 1e-9);
        assert!((nmse_db(&half, &truth).unwrap() + 6.0206).abs() < 1e-4);
        assert!(matches!(nmse_db(&truth, &MMVSignal::zeros(2, 2)), Err(Error::ZeroGroundTruth)));
    }

    #[test]
    fn gain_sign_convention() {
        assert_eq!(untied_gain(-10.0, -8.0), -2.0);
        assert_eq!(untied_gain(-3.5, -3.5), 0.0);
    }

    #[test]
    fn ci_examples() {
        let c = ci95(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((c.lower, c.mean, c.upper), (2.0, 2.0, 2.0));
        let c = ci95(&[0.0, 2.0]).unwrap();
        assert_eq!(c.mean, 1.0);
        // s = sqrt(2), n = 2, so the half width is 1.96 * sqrt(2) / sqrt(2)
        assert!((c.half_width() - 1.96).abs() < 1e-15);
        assert!((c.mean - c.lower - (c.upper - c.mean)).abs() < 1e-15);
        assert!(ci95(&[1.0]).is_err());
    }

    #[test]
    fn curve_bounds_bracket_mean() {
        let curves = vec![vec![0.0, -1.0, -3.0], vec![0.0, -2.0, -4.0], vec![0.0, -1.5, -2.0]];
        let c = NmseCurve::from_instances(&curves).unwrap();
        assert_eq!(c.test_set_size, 3);
        for i in 0..3 {
            assert!(c.lower[i] <= c.mean[i] && c.mean[i] <= c.upper[i]);
        }
        assert!(c.to_csv().starts_with("iteration,mean_nmse_db"));
        assert!(NmseCurve::from_instances(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn defect_estimate_examples() {
        let x = sig(array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]);
        assert_eq!(defect_estimate(&x).to_vec(), vec![0.0, 0.5, 1.0, 0.0]);
        assert_eq!(defect_estimate(&MMVSignal::zeros(3, 2)).to_vec(), vec![0.0; 3]);
        let neg = sig(array![[-1.0], [0.5]]);
        assert_eq!(defect_estimate(&neg).to_vec(), vec![-1.0, 0.5]);
        assert_eq!(positive_part(&defect_estimate(&neg)).to_vec(), vec![0.0, 0.5]);
    }

    #[test]
    fn wasserstein_examples() {
        let u = [0.0, 1.0, 3.0, 0.5];
        assert_eq!(wasserstein1(&u, &u).unwrap(), 0.0);
        let mut a = vec![0.0; 9];
        let mut b = vec![0.0; 9];
        a[0] = 1.0;
        b[8] = 2.0;
        assert_eq!(wasserstein1(&a, &b).unwrap(), 1.0);
        let mut c = vec![0.0; 9];
        c[4] = 1.0;
        assert_eq!(wasserstein1(&a, &c).unwrap(), 0.5);
    }

    #[test]
    fn wasserstein_errors() {
        assert!(wasserstein1(&[1.0, -0.5], &[1.0, 1.0]).is_err());
        assert!(wasserstein1(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(wasserstein1(&[1.0], &[1.0, 1.0]).is_err());
        assert_eq!(wasserstein1(&[3.0], &[1.0]).unwrap(), 0.0);
    }
}
