use serde::{Deserialize, Serialize};

use super::{ols, SpectroscopyError};

const MIN_POINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuspModel {
    Triangular,
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspReport {
    /// `a |r - 1| + c`.
    pub triangular: (f64, f64),
    /// `b (r - 1)^2 + c`.
    pub parabolic: (f64, f64),
    pub triangular_sse: f64,
    pub parabolic_sse: f64,
    /// `parabolic_sse / triangular_sse`.
    pub ratio: f64,
    pub preferred: CuspModel,
    pub n_points: usize,
}

/// Compares a triangular and a parabolic profile against the points with
/// `|r - 1| <= half_width`.
pub fn cusp_test(r: &[f64], y: &[f64], half_width: f64) -> Result<CuspReport, SpectroscopyError> {
    let (x, v): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(y)
        .filter(|(r, v)| (*r - 1.0).abs() <= half_width && v.is_finite())
        .map(|(r, v)| (r - 1.0, *v))
        .unzip();
    if x.len() < MIN_POINTS {
        return Err(SpectroscopyError::InsufficientPoints { needed: MIN_POINTS, got: x.len() });
    }
    let fit = |f: fn(f64) -> f64| {
        let u: Vec<f64> = x.iter().map(|d| f(*d)).collect();
        let (s, c, _) = ols(&u, &v).unwrap_or((0.0, v.iter().sum::<f64>() / v.len() as f64, 0.0));
        let sse: f64 = u.iter().zip(&v).map(|(a, b)| (b - s * a - c).powi(2)).sum();
        ((s, c), sse)
    };
    let (triangular, triangular_sse) = fit(f64::abs);
    let (parabolic, parabolic_sse) = fit(|d| d * d);
    let ratio = parabolic_sse / triangular_sse;
    Ok(CuspReport {
        triangular,
        parabolic,
        triangular_sse,
        parabolic_sse,
        ratio,
        preferred: if triangular_sse <= parabolic_sse { CuspModel::Triangular } else { CuspModel::Parabolic },
        n_points: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..41).map(|i| 0.99 + 0.0005 * i as f64).collect()
    }

    #[test]
    fn triangle_is_preferred() {
        let r = grid();
        let y: Vec<f64> = r.iter().map(|x| 1.0 - 30.0 * (x - 1.0).abs()).collect();
        let rep = cusp_test(&r, &y, 0.01).unwrap();
        assert_eq!(rep.preferred, CuspModel::Triangular);
        assert!(rep.ratio > 3.0);
        assert!((rep.triangular.0 + 30.0).abs() < 1e-8);
    }

    #[test]
    fn parabola_is_preferred() {
        let r = grid();
        let y: Vec<f64> = r.iter().map(|x| 1.0 - 3000.0 * (x - 1.0).powi(2)).collect();
        let rep = cusp_test(&r, &y, 0.01).unwrap();
        assert_eq!(rep.preferred, CuspModel::Parabolic);
        assert!(rep.ratio < 1.0 / 3.0);
    }

    #[test]
    fn needs_seven_inner_points() {
        let r = grid();
        let y = vec![1.0; r.len()];
        assert!(matches!(
            cusp_test(&r, &y, 0.0012),
            Err(SpectroscopyError::InsufficientPoints { needed: 7, got: 5 })
        ));
    }
}
