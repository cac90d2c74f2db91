use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

use super::Dataset;

/// Split sizes by largest remainder; they always sum to `n`.
pub fn split_sizes(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.iter().any(|&r| r.is_nan() || r <= 0.0) {
        return Err(Error::config("split.ratios", "ratios must all be positive"));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split.ratios", "ratios must sum to 1"));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut missing = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        sizes[i] += 1;
        missing -= 1;
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Validation(format!(
            "split {i} would receive no samples"
        )));
    }
    Ok(sizes)
}

/// Seeded disjoint partition, stratified by view.
///
/// Samples are shuffled within each view group and then interleaved by
/// their fractional rank within the group, so every contiguous chunk of the
/// combined order holds each view in (nearly) its global proportion.
pub fn split(dataset: &Dataset, ratios: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    let sizes = split_sizes(dataset.len(), ratios)?;

    let mut groups: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        match groups.iter_mut().find(|(v, _)| *v == s.view) {
            Some((_, members)) => members.push(i),
            None => groups.push((s.view, vec![i])),
        }
    }
    groups.sort_by_key(|(v, _)| *v);

    let mut keyed_order: Vec<(f64, usize, usize)> = Vec::with_capacity(dataset.len());
    for (g, (view, members)) in groups.iter_mut().enumerate() {
        let mut rng = keyed(seed, Stream::Split, (*view + 1) as u64);
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        for (j, &idx) in members.iter().enumerate() {
            keyed_order.push(((j as f64 + 0.5) / n, g, idx));
        }
    }
    keyed_order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let mut idx: Vec<usize> = keyed_order[start..start + size]
            .iter()
            .map(|k| k.2)
            .collect();
        idx.sort_unstable();
        out.push(dataset.subset(&idx));
        start += size;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GenConfig};

    #[test]
    fn sizes_follow_ratios() {
        assert_eq!(
            split_sizes(100, &[0.5, 0.1, 0.4]).unwrap(),
            vec![50, 10, 40]
        );
        assert_eq!(
            split_sizes(12_000, &[0.7, 0.1, 0.2]).unwrap(),
            vec![8400, 1200, 2400]
        );
        assert_eq!(
            split_sizes(10, &[1.0 / 3.0; 3])
                .unwrap()
                .iter()
                .sum::<usize>(),
            10
        );
        assert!(split_sizes(100, &[0.5, 0.6]).is_err());
        assert!(split_sizes(100, &[0.5, 0.0, 0.5]).is_err());
        assert!(matches!(
            split_sizes(3, &[0.9, 0.05, 0.05]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn partition_covers_dataset() {
        let cfg = GenConfig {
            samples: 100,
            ..GenConfig::default()
        };
        let (d, _) = generate(&cfg).unwrap();
        let parts = split(&d, &[0.5, 0.1, 0.4], 3).unwrap();
        assert_eq!(
            parts.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![50, 10, 40]
        );
        let mut all: Vec<_> = parts.iter().flat_map(|p| p.samples.clone()).collect();
        let mut orig = d.samples.clone();
        let key = |s: &super::super::Sample| s.x[0].to_bits();
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);
        assert_eq!(split(&d, &[0.5, 0.1, 0.4], 3).unwrap(), parts);
    }
}
