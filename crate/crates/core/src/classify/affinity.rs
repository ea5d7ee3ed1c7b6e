//! Affinity propagation: exemplar-based clustering by passing responsibility
//! and availability messages between points. The number of clusters falls
//! out of the preference value.

use super::ClassifyError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityPropagation {
    pub preference: Preference,
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay unchanged to count as converged.
    pub convergence_iter: usize,
}

impl Default for AffinityPropagation {
    fn default() -> Self {
        Self {
            preference: Preference::Median,
            damping: 0.9,
            max_iter: 1000,
            convergence_iter: 50,
        }
    }
}

/// Cluster labels for points given by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ApClustering {
    /// Point indices of the exemplars, ascending. Cluster `c` is `exemplars[c]`.
    pub exemplars: Vec<usize>,
    /// Cluster of every point.
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl ApClustering {
    pub fn n_clusters(&self) -> usize {
        self.exemplars.len()
    }
}

/// Negative squared Euclidean distance.
pub fn similarity(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    -(dx * dx + dy * dy)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl AffinityPropagation {
    fn validate(&self) -> Result<(), ClassifyError> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(ClassifyError::InvalidDamping(self.damping));
        }
        if self.max_iter == 0 || self.convergence_iter == 0 {
            return Err(ClassifyError::InvalidIterations);
        }
        if let Preference::Value(p) = self.preference {
            if !p.is_finite() {
                return Err(ClassifyError::NonFinite);
            }
        }
        Ok(())
    }

    /// Clusters `points`. Not converging within `max_iter` is reported
    /// through `converged = false`, with the labels as of the last iteration.
    pub fn fit(&self, points: &[[f64; 2]]) -> Result<ApClustering, ClassifyError> {
        self.validate()?;
        let n = points.len();
        if n < 2 {
            return Err(ClassifyError::TooFewPoints(n));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFinite);
        }

        let mut s = vec![0.0; n * n];
        let mut off_diag = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    let v = similarity(&points[i], &points[k]);
                    s[i * n + k] = v;
                    off_diag.push(v);
                }
            }
        }
        let first = off_diag[0];
        let all_equal = off_diag.iter().all(|&v| v == first);
        let pref = match self.preference {
            Preference::Median => median(off_diag),
            Preference::Value(p) => p,
        };
        for i in 0..n {
            s[i * n + i] = pref;
        }

        // With all similarities equal, messages never break the tie.
        if all_equal {
            let (exemplars, labels) = if pref > first {
                ((0..n).collect(), (0..n).collect())
            } else {
                (vec![0], vec![0; n])
            };
            return Ok(ApClustering {
                exemplars,
                labels,
                iterations: 0,
                converged: true,
            });
        }

        let damp = self.damping;
        let mut r = vec![0.0; n * n];
        let mut a = vec![0.0; n * n];
        let mut is_exemplar = vec![false; n];
        let mut stable = 0;
        let mut iterations = 0;
        let mut converged = false;
        let mut col = vec![0.0; n];

        for it in 0..self.max_iter {
            iterations = it + 1;

            for i in 0..n {
                let row = i * n;
                let (mut best, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
                for k in 0..n {
                    let v = a[row + k] + s[row + k];
                    if v > best {
                        second = best;
                        best = v;
                        arg = k;
                    } else if v > second {
                        second = v;
                    }
                }
                for k in 0..n {
                    let competitor = if k == arg { second } else { best };
                    let fresh = s[row + k] - competitor;
                    r[row + k] = damp * r[row + k] + (1.0 - damp) * fresh;
                }
            }

            col.fill(0.0);
            for i in 0..n {
                for (k, c) in col.iter_mut().enumerate() {
                    let v = r[i * n + k];
                    *c += if i == k { v } else { v.max(0.0) };
                }
            }
            for i in 0..n {
                for (k, &c) in col.iter().enumerate() {
                    let idx = i * n + k;
                    let rp = if i == k { r[idx] } else { r[idx].max(0.0) };
                    let total = c - rp;
                    let fresh = if i == k { total } else { total.min(0.0) };
                    a[idx] = damp * a[idx] + (1.0 - damp) * fresh;
                }
            }

            let mut changed = false;
            for k in 0..n {
                let e = a[k * n + k] + r[k * n + k] > 0.0;
                if e != is_exemplar[k] {
                    changed = true;
                    is_exemplar[k] = e;
                }
            }
            if changed {
                stable = 0;
            } else {
                stable += 1;
            }
            if stable >= self.convergence_iter && is_exemplar.iter().any(|&e| e) {
                converged = true;
                break;
            }
        }

        let mut exemplars: Vec<usize> = (0..n).filter(|&k| is_exemplar[k]).collect();
        if exemplars.is_empty() {
            // No point claimed itself; fall back to the strongest candidate.
            let best = (0..n)
                .max_by(|&x, &y| {
                    let ex = a[x * n + x] + r[x * n + x];
                    let ey = a[y * n + y] + r[y * n + y];
                    ex.total_cmp(&ey).then(y.cmp(&x))
                })
                .unwrap_or(0);
            exemplars.push(best);
        }
        let labels = (0..n)
            .map(|i| {
                if let Ok(c) = exemplars.binary_search(&i) {
                    return c;
                }
                let mut best = 0;
                for (c, &k) in exemplars.iter().enumerate() {
                    if s[i * n + k] > s[i * n + exemplars[best]] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        Ok(ApClustering {
            exemplars,
            labels,
            iterations,
            converged,
        })
    }
}
