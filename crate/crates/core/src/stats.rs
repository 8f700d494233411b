//! Small descriptive-statistics helpers shared by the estimators and reports.

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (divide-by-n) variance, two-pass.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Unbiased (divide-by-(n-1)) sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Median (average of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean with a normal-approximation 95% confidence interval of the mean.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const Z_95: f64 = 1.96;

impl MeanCi {
    pub fn from_samples(xs: &[f64]) -> Self {
        let mean = mean(xs);
        let se = standard_error(xs);
        MeanCi {
            mean,
            se,
            lower: mean - Z_95 * se,
            upper: mean + Z_95 * se,
        }
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}
