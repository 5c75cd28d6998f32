//! Two-sample distances and plot data.

use std::io::Read;

use serde::Serialize;

use crate::bootstrap::order_statistic_quantile;
use crate::{Error, Result};

/// Grid points per observation for the unequal-size Wasserstein-1 integral.
pub const W1_GRID_FACTOR: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceReport {
    pub kolmogorov: f64,
    pub wasserstein1: f64,
    pub n1: usize,
    pub n2: usize,
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<DistanceReport> {
    Ok(DistanceReport {
        kolmogorov: kolmogorov_distance(a, b)?,
        wasserstein1: wasserstein1(a, b)?,
        n1: a.len(),
        n2: b.len(),
    })
}

fn sorted(a: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite(what));
    }
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup_u |F_a(u) - F_b(u)|` over the merged support.
pub fn kolmogorov_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "first sample")?;
    let b = sorted(b, "second sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let u = a[i].min(b[j]);
        while i < a.len() && a[i] == u {
            i += 1;
        }
        while j < b.len() && b[j] == u {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Mean absolute difference of order statistics for equal sizes; otherwise
/// a midpoint rule for `int_0^1 |F_a^{-1} - F_b^{-1}|` on
/// `8 max(n1, n2)` points.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "first sample")?;
    let b = sorted(b, "second sample")?;
    if a.len() == b.len() {
        let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / a.len() as f64);
    }
    let m = W1_GRID_FACTOR * a.len().max(b.len());
    let inverse = |s: &[f64], u: f64| {
        let k = ((u * s.len() as f64).ceil() as usize).clamp(1, s.len());
        s[k - 1]
    };
    let total: f64 = (0..m)
        .map(|k| {
            let u = (k as f64 + 0.5) / m as f64;
            (inverse(&a, u) - inverse(&b, u)).abs()
        })
        .sum();
    Ok(total / m as f64)
}

/// `q` pairs of exact order-statistic quantiles at levels `k / (q + 1)`.
pub fn qq_pairs(a: &[f64], b: &[f64], q: usize) -> Result<Vec<(f64, f64)>> {
    if q < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 QQ points, got {q}")));
    }
    let a = sorted(a, "first sample")?;
    let b = sorted(b, "second sample")?;
    (1..=q)
        .map(|k| {
            let level = k as f64 / (q + 1) as f64;
            Ok((order_statistic_quantile(&a, level)?, order_statistic_quantile(&b, level)?))
        })
        .collect()
}

/// Breakpoints `(x_(i), i / n)` of the ECDF, one per distinct value.
pub fn ecdf_points(a: &[f64]) -> Result<Vec<(f64, f64)>> {
    let a = sorted(a, "sample")?;
    let n = a.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in a.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    Ok(out)
}

/// Reads a sample from CSV text: the first column of every record, skipping
/// a non-numeric header line and blank lines.
pub fn read_sample<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let Some(field) = record.get(0) else { continue };
        if field.is_empty() && record.len() == 1 {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(Error::NonFinite("sample value")),
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::Parse { row: row + 1, column: 1, message: e.to_string() });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("sample file"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Evaluates both ECDFs at every observed point.
    fn ks_grid(a: &[f64], b: &[f64]) -> f64 {
        let f = |s: &[f64], u: f64| s.iter().filter(|&&v| v <= u).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&u| (f(a, u) - f(b, u)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn kolmogorov_examples() {
        let a = [0.3, 1.0, -2.0];
        assert_eq!(kolmogorov_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(kolmogorov_distance(&[0.0, 1.0], &[10.0, 11.0]).unwrap(), 1.0);
        let d = kolmogorov_distance(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d, ks_grid(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]));
        assert!(matches!(kolmogorov_distance(&[], &[1.0]), Err(Error::EmptyInput(_))));
        assert!(kolmogorov_distance(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_ties() {
        // equal values must be advanced together before comparing
        assert_eq!(kolmogorov_distance(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), ks_grid(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]));
        assert_eq!(kolmogorov_distance(&[5.0, 5.0], &[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein1(&a, &[2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        // unequal sizes: {0, 1} vs {0, 0, 1}; exact value int |F^-1 - G^-1| = 1/6
        let w = wasserstein1(&[0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!((w - 1.0 / 6.0).abs() < 1.0 / 24.0 + 1e-12, "{w}");
    }

    #[test]
    fn qq_examples() {
        let a: Vec<f64> = (0..50).map(|i| (i * 37 % 50) as f64).collect();
        for (x, y) in qq_pairs(&a, &a, 9).unwrap() {
            assert_eq!(x, y);
        }
        let shifted: Vec<f64> = a.iter().map(|v| v + 2.5).collect();
        for (x, y) in qq_pairs(&a, &shifted, 9).unwrap() {
            assert_eq!(y - x, 2.5);
        }
        assert!(qq_pairs(&a, &a, 1).is_err());
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(
            ecdf_points(&[3.0, 1.0, 2.0]).unwrap(),
            vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]
        );
        assert_eq!(ecdf_points(&[5.0, 5.0]).unwrap(), vec![(5.0, 1.0)]);
    }

    #[test]
    fn sample_reader() {
        let s = read_sample("value\n1.5\n\n2,ignored\n-3e2\n".as_bytes()).unwrap();
        assert_eq!(s, vec![1.5, 2.0, -300.0]);
        assert!(matches!(read_sample("1\nx\n".as_bytes()), Err(Error::Parse { row: 2, .. })));
        assert!(read_sample("header\n".as_bytes()).is_err());
        assert!(read_sample("1\nNaN\n".as_bytes()).is_err());
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-20i32..20).prop_map(|v| v as f64 * 0.5), 1..40)
    }

    proptest! {
        #[test]
        fn kolmogorov_matches_grid_oracle(a in sample(), b in sample()) {
            let d = kolmogorov_distance(&a, &b).unwrap();
            prop_assert!((d - ks_grid(&a, &b)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, kolmogorov_distance(&b, &a).unwrap());
            let ta: Vec<f64> = a.iter().map(|v| v.exp() + 3.0 * v).collect();
            let tb: Vec<f64> = b.iter().map(|v| v.exp() + 3.0 * v).collect();
            prop_assert!((d - kolmogorov_distance(&ta, &tb).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn kolmogorov_equal_size_rank_oracle(pairs in prop::collection::vec((-50i32..50, -50i32..50), 1..40)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let n = a.len();
            // classical oracle: pool, sort, walk with +1/-1 steps grouped by value
            let mut pooled: Vec<(f64, i32)> = a.iter().map(|&v| (v, 1)).chain(b.iter().map(|&v| (v, -1))).collect();
            pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
            let (mut walk, mut best, mut k) = (0i32, 0i32, 0);
            while k < pooled.len() {
                let v = pooled[k].0;
                while k < pooled.len() && pooled[k].0 == v {
                    walk += pooled[k].1;
                    k += 1;
                }
                best = best.max(walk.abs());
            }
            prop_assert!((kolmogorov_distance(&a, &b).unwrap() - best as f64 / n as f64).abs() < 1e-12);
        }

        #[test]
        fn wasserstein_properties(pairs in prop::collection::vec((-50i32..50, -50i32..50), 1..40), c in -5.0f64..5.0) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let w = wasserstein1(&a, &b).unwrap();
            prop_assert_eq!(w, wasserstein1(&b, &a).unwrap());
            let sa: Vec<f64> = a.iter().map(|v| v + c).collect();
            let sb: Vec<f64> = b.iter().map(|v| v + c).collect();
            prop_assert!((w - wasserstein1(&sa, &sb).unwrap()).abs() < 1e-9);
            let ma: Vec<f64> = a.iter().map(|v| v * c).collect();
            let mb: Vec<f64> = b.iter().map(|v| v * c).collect();
            prop_assert!((c.abs() * w - wasserstein1(&ma, &mb).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn qq_matches_scan(a in sample(), b in sample(), q in 2usize..20) {
            let mut sa = a.clone();
            sa.sort_by(f64::total_cmp);
            let mut sb = b.clone();
            sb.sort_by(f64::total_cmp);
            let scan = |s: &[f64], level: f64| {
                let n = s.len();
                s[(1..=n).find(|&k| k as f64 / n as f64 >= level).unwrap() - 1]
            };
            for (k, (x, y)) in qq_pairs(&a, &b, q).unwrap().into_iter().enumerate() {
                let level = (k + 1) as f64 / (q + 1) as f64;
                prop_assert_eq!(x, scan(&sa, level));
                prop_assert_eq!(y, scan(&sb, level));
            }
        }

        #[test]
        fn ecdf_matches_counting(a in sample()) {
            let pts = ecdf_points(&a).unwrap();
            for (x, f) in &pts {
                let count = a.iter().filter(|&&v| v <= *x).count() as f64 / a.len() as f64;
                prop_assert!((f - count).abs() < 1e-15);
            }
            prop_assert!(pts.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
