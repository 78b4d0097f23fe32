//! Embedded example data.

use nalgebra::DMatrix;
use serde::Serialize;

/// Summary statistics of the HIV blood-measure study (6 variables, 107 children).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryDataset {
    pub name: &'static str,
    pub variables: Vec<&'static str>,
    /// Full symmetric correlation matrix.
    pub correlation: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub n: usize,
    /// Whether the mean was known when the statistics were computed.
    pub known_mean: bool,
}

const HIV_LOWER: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.483, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.220, 0.057, 1.0, 0.0, 0.0, 0.0],
    [-0.040, -0.133, 0.149, 1.0, 0.0, 0.0],
    [0.253, -0.124, 0.523, 0.179, 1.0, 0.0],
    [-0.276, -0.314, -0.183, 0.064, 0.213, 1.0],
];

const HIV_VARIANCES: [f64; 6] = [8.8374, 0.1919, 8924231.9, 20392.4, 1952795.2, 1.378];

pub fn hiv() -> SummaryDataset {
    let correlation = (0..6)
        .map(|i| (0..6).map(|j| if i >= j { HIV_LOWER[i][j] } else { HIV_LOWER[j][i] }).collect())
        .collect();
    SummaryDataset {
        name: "hiv",
        variables: vec![
            "immunoglobin G",
            "immunoglobin A",
            "lymphocyte B",
            "platelet count",
            "lymphocyte T4",
            "T4/T8 lymphocyte ratio",
        ],
        correlation,
        variances: HIV_VARIANCES.to_vec(),
        n: 107,
        known_mean: false,
    }
}

pub fn by_name(name: &str) -> Option<SummaryDataset> {
    match name.to_ascii_lowercase().as_str() {
        "hiv" => Some(hiv()),
        _ => None,
    }
}

impl SummaryDataset {
    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.correlation[i][j])
    }

    /// Covariance rebuilt from correlations and variances.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let sd: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        DMatrix::from_fn(d, d, |i, j| if i == j { self.variances[i] } else { self.correlation[i][j] * sd[i] * sd[j] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hiv_values() {
        let h = hiv();
        assert_eq!(h.correlation[1][0], 0.483);
        assert_eq!(h.correlation[0][1], 0.483);
        assert_eq!(h.variances[2], 8924231.9);
        assert_eq!(h.n, 107);
        let r = h.correlation_matrix();
        assert_eq!(r, r.transpose());
        assert!(r.clone().cholesky().is_some());
        assert!(by_name("HIV").is_some());
        assert!(by_name("fmri").is_none());
    }
}
