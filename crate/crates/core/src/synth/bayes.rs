use crate::error::{Error, Result};
use crate::eval::{mean_accuracy, AttributeAverage, PredictionBatch, DEFAULT_THRESHOLD};

use super::{tempered, Dataset, GroundTruthModel};

/// mA of the two generative-posterior classifiers on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesReference {
    /// Uses the true view's weights and the least-squares latent estimate.
    pub view_aware: AttributeAverage,
    /// Uses view-averaged weights and biases, and ignores the view offset.
    pub view_blind: AttributeAverage,
}

impl BayesReference {
    pub fn gap(&self) -> f64 {
        self.view_aware.value - self.view_blind.value
    }
}

/// `(AᵀA)⁻¹Aᵀ` for a `D × Z` map, by Gauss-Jordan elimination with partial
/// pivoting on the normal equations.
fn pseudo_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = a.len();
    let z = a[0].len();
    // Augmented [AᵀA | Aᵀ].
    let mut m = vec![vec![0.0; z + d]; z];
    for i in 0..z {
        for j in 0..z {
            m[i][j] = (0..d).map(|k| a[k][i] * a[k][j]).sum();
        }
        for k in 0..d {
            m[i][z + k] = a[k][i];
        }
    }
    for col in 0..z {
        let pivot = (col..z)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .expect("non-empty");
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::Contract("observation map is rank deficient".into()));
        }
        m.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        m[col].iter_mut().for_each(|x| *x *= inv);
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                row.iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(x, p)| *x -= f * p);
            }
        }
    }
    Ok(m.into_iter().map(|row| row[z..].to_vec()).collect())
}

fn apply(p: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    p.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn bayes_reference(gt: &GroundTruthModel, data: &Dataset) -> Result<BayesReference> {
    let v = gt.view_count();
    let c = data.attribute_count;
    let pinv: Vec<Vec<Vec<f64>>> = gt
        .obs_maps
        .iter()
        .map(|a| pseudo_inverse(a))
        .collect::<Result<_>>()?;

    let mean_map: Vec<Vec<f64>> = (0..gt.obs_maps[0].len())
        .map(|i| {
            (0..gt.obs_maps[0][0].len())
                .map(|j| gt.obs_maps.iter().map(|a| a[i][j]).sum::<f64>() / v as f64)
                .collect()
        })
        .collect();
    let blind_pinv = pseudo_inverse(&mean_map)?;
    let blind_w: Vec<Vec<f64>> = (0..c)
        .map(|ci| {
            (0..gt.attr_weights[0][ci].len())
                .map(|k| gt.attr_weights.iter().map(|w| w[ci][k]).sum::<f64>() / v as f64)
                .collect()
        })
        .collect();
    let blind_b: Vec<f64> = (0..c)
        .map(|ci| gt.attr_bias.iter().map(|b| b[ci]).sum::<f64>() / v as f64)
        .collect();

    let mut aware = Vec::with_capacity(data.len() * c);
    let mut blind = Vec::with_capacity(data.len() * c);
    let mut labels = Vec::with_capacity(data.len() * c);
    for s in &data.samples {
        if s.view < 0 {
            return Err(Error::Validation(
                "the view-aware reference needs known views".into(),
            ));
        }
        let view = s.view as usize;
        let centered: Vec<f64> =
            s.x.iter()
                .zip(&gt.offsets[view])
                .map(|(x, o)| x - o)
                .collect();
        let z = apply(&pinv[view], &centered);
        let zb = apply(&blind_pinv, &s.x);
        for ci in 0..c {
            aware.push(gt.attribute_probability(view, ci, &z));
            let logit: f64 =
                blind_w[ci].iter().zip(&zb).map(|(w, z)| w * z).sum::<f64>() + blind_b[ci];
            blind.push(tempered(logit, gt.label_temperature));
            labels.push(s.attrs[ci] == 1);
        }
    }
    let n = data.len();
    let aware = PredictionBatch::new(aware, labels.clone(), n, c, DEFAULT_THRESHOLD)?;
    let blind = PredictionBatch::new(blind, labels, n, c, DEFAULT_THRESHOLD)?;
    Ok(BayesReference {
        view_aware: mean_accuracy(&aware)?,
        view_blind: mean_accuracy(&blind)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GenConfig};

    #[test]
    fn pseudo_inverse_recovers_latent() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]];
        let p = pseudo_inverse(&a).unwrap();
        let z = [0.3, -0.7];
        let x: Vec<f64> = a.iter().map(|r| r[0] * z[0] + r[1] * z[1]).collect();
        let back = apply(&p, &x);
        assert!((back[0] - z[0]).abs() < 1e-12 && (back[1] - z[1]).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit_is_perfect() {
        let cfg = GenConfig {
            samples: 2000,
            obs_noise: 0.0,
            label_temperature: 0.0,
            ..GenConfig::default()
        };
        let (d, gt) = generate(&cfg).unwrap();
        let r = bayes_reference(&gt, &d).unwrap();
        assert!(r.view_aware.value > 0.999, "{}", r.view_aware.value);
    }
}
