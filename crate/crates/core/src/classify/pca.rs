//! Two-dimensional principal component analysis and min-max scaling.

use super::ClassifyError;

/// Result of projecting points onto their principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub points: Vec<[f64; 2]>,
    pub mean: [f64; 2],
    /// Unit eigenvectors of the sample covariance, principal axis first.
    pub components: [[f64; 2]; 2],
    /// Matching eigenvalues, descending.
    pub eigenvalues: [f64; 2],
}

/// Sample covariance `[[sxx, sxy], [sxy, syy]]` (n - 1 denominator) and mean.
pub fn covariance(points: &[[f64; 2]]) -> ([f64; 2], [f64; 3]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let d = n - 1.0;
    ([mx, my], [sxx / d, sxy / d, syy / d])
}

/// Flips a vector so its largest-magnitude coordinate is positive.
fn canonical_sign(v: [f64; 2]) -> [f64; 2] {
    let pivot = if v[0].abs() >= v[1].abs() { v[0] } else { v[1] };
    if pivot < 0.0 {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Centers the points and rotates them onto the eigenvectors of their
/// covariance, ordered by descending eigenvalue.
///
/// The symmetric 2x2 eigenproblem is solved by a single Jacobi rotation.
pub fn pca2(points: &[[f64; 2]]) -> Result<Pca2, ClassifyError> {
    if points.len() < 2 {
        return Err(ClassifyError::TooFewPoints(points.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifyError::NonFinite);
    }
    let (mean, [a, b, c]) = covariance(points);
    if a == 0.0 && c == 0.0 {
        return Err(ClassifyError::ZeroVariance);
    }
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let mut v1 = [co, s];
    let mut v2 = [-s, co];
    let mut l1 = a * co * co + 2.0 * b * s * co + c * s * s;
    let mut l2 = a * s * s - 2.0 * b * s * co + c * co * co;
    if l2 > l1 {
        std::mem::swap(&mut v1, &mut v2);
        std::mem::swap(&mut l1, &mut l2);
    }
    let v1 = canonical_sign(v1);
    let v2 = canonical_sign(v2);
    let projected = points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
            [dx * v1[0] + dy * v1[1], dx * v2[0] + dy * v2[1]]
        })
        .collect();
    Ok(Pca2 {
        points: projected,
        mean,
        components: [v1, v2],
        eigenvalues: [l1, l2.max(0.0)],
    })
}

/// Per-dimension `(x - min) / (max - min)`. A dimension with zero range maps
/// every point to 0.5.
pub fn minmax_scale(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, ClassifyError> {
    if points.len() < 2 {
        return Err(ClassifyError::TooFewPoints(points.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifyError::NonFinite);
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    Ok(points
        .iter()
        .map(|p| {
            let mut out = [0.5; 2];
            for d in 0..2 {
                let range = hi[d] - lo[d];
                if range > 0.0 {
                    out[d] = ((p[d] - lo[d]) / range).clamp(0.0, 1.0);
                }
            }
            out
        })
        .collect())
}
